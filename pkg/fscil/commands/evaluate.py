"""Incremental evaluation of a checkpoint."""

import argparse
import logging
from pathlib import Path

from fscil.commands.common import (
    add_common_arguments,
    build_stream,
    config_from_args,
    eval_options,
    output_dir,
)
from fscil.schemas.config import RunConfig
from fscil.schemas.report import EvalReport
from fscil.services.checkpoint_service import load_checkpoint
from fscil.services.evaluation_service import run_incremental
from fscil.services.report_service import write_eval_report

logger = logging.getLogger(__name__)


def cmd_eval(config: RunConfig, checkpoint: Path) -> EvalReport:
    """Run every session with the configured method and write the reports."""
    state = load_checkpoint(checkpoint)
    if config.method == "limit" and config.eval.calibration and not state.meta_trained:
        logger.warning(f"{checkpoint} was not meta-trained; calibration is untrained")
    report = run_incremental(state, build_stream(config), eval_options(config))
    write_eval_report(report, output_dir(config))
    return report


def run(args: argparse.Namespace) -> int:
    report = cmd_eval(config_from_args(args), args.checkpoint)
    print(" ".join(f"{acc:.2f}" for acc in report.session_acc) + f"  PD={report.pd:.2f}")
    return 0


def register(subparsers: argparse._SubParsersAction) -> None:
    parser = subparsers.add_parser("eval", help="Evaluate a checkpoint session by session")
    add_common_arguments(parser)
    parser.add_argument("--checkpoint", type=Path, required=True)
    parser.set_defaults(func=run)
