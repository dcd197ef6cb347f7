"""Evaluation repeated over several K-shot draws."""

import argparse
import logging
from pathlib import Path

from fscil.commands.common import (
    add_common_arguments,
    config_from_args,
    eval_options,
    load_dataset,
    output_dir,
)
from fscil.exceptions import ConfigError
from fscil.schemas.config import RunConfig
from fscil.schemas.report import TrialsReport
from fscil.services.checkpoint_service import load_checkpoint
from fscil.services.evaluation_service import run_trials
from fscil.services.report_service import write_trials_report

logger = logging.getLogger(__name__)


def cmd_trials(config: RunConfig, checkpoint: Path, trials: int) -> TrialsReport:
    """Evaluate with instance seeds 1..trials and write trials.json / trials.csv."""
    if trials < 1:
        raise ConfigError("--trials must be >= 1", fields=["trials"])
    state = load_checkpoint(checkpoint)
    report = run_trials(
        state,
        load_dataset(config),
        config.dataset.split,
        eval_options(config),
        instance_seeds=list(range(1, trials + 1)),
    )
    write_trials_report(report, output_dir(config))
    logger.info(f"final accuracy {report.final_mean:.2f} ± {report.final_std:.2f} over {trials} trials")
    return report


def run(args: argparse.Namespace) -> int:
    report = cmd_trials(config_from_args(args), args.checkpoint, args.trials)
    print(" ".join(f"{acc:.2f}" for acc in report.mean_session_acc))
    return 0


def register(subparsers: argparse._SubParsersAction) -> None:
    parser = subparsers.add_parser("trials", help="Average evaluation over K-shot draws")
    add_common_arguments(parser)
    parser.add_argument("--checkpoint", type=Path, required=True)
    parser.add_argument("--trials", type=int, default=5)
    parser.set_defaults(func=run)
