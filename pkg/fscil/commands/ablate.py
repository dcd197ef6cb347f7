"""Component ablation grid over a pre-trained checkpoint."""

import argparse
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional

from fscil.commands.common import (
    add_common_arguments,
    build_stream,
    config_from_args,
    eval_options,
    load_dataset,
    output_dir,
    show_progress,
    training_rng,
)
from fscil.exceptions import ConfigError, DivergenceError, NumericError
from fscil.models.dataset import Dataset, SessionStream
from fscil.models.network import ModelState
from fscil.schemas.config import MetaConfig, RunConfig
from fscil.schemas.report import AblationReport, AblationRow
from fscil.services.checkpoint_service import load_checkpoint, save_checkpoint
from fscil.services.evaluation_service import performance_drop, run_trials
from fscil.services.report_service import write_ablation_report
from fscil.services.training_service import meta_train

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Variant:
    """One row of the grid: which components are active and how the model is trained."""

    name: str
    prototype: bool
    calibration: bool
    meta_1: bool = False
    meta_c: bool = False
    phases: Optional[int] = None
    update_backbone: bool = True


def variants(phases: int) -> List[Variant]:
    """The five standard rows, from plain finetuning to C-phase meta-training."""
    return [
        Variant("finetune", prototype=False, calibration=False),
        Variant("prototype", prototype=True, calibration=False),
        Variant("prototype+calibration", True, True, phases=1, update_backbone=False),
        Variant("meta-1", True, True, meta_1=True, phases=1),
        Variant(f"meta-{phases}", True, True, meta_c=True, phases=phases),
    ]


def _meta_config(base: MetaConfig, variant: Variant) -> MetaConfig:
    fake_task = base.fake_task.model_copy(update={"phases": variant.phases})
    return base.model_copy(
        update={"fake_task": fake_task, "update_backbone": variant.update_backbone}
    )


def _run_variant(
    variant: Variant,
    pretrained: ModelState,
    config: RunConfig,
    dataset: Dataset,
    stream: SessionStream,
    seeds: List[int],
) -> AblationRow:
    """Train and evaluate one row; numeric failures are recorded on the row."""
    flags = dict(
        name=variant.name,
        prototype=variant.prototype,
        calibration=variant.calibration,
        meta_1=variant.meta_1,
        meta_c=variant.meta_c,
    )
    try:
        state = pretrained.copy()
        if variant.phases is not None:
            meta_cfg = _meta_config(config.train.meta, variant)
            state = meta_train(
                state, stream.base, meta_cfg, training_rng(config), progress=show_progress()
            ).state
            save_checkpoint(state, output_dir(config) / "ablation" / f"{variant.name}.json")
        options = eval_options(config, prototype=variant.prototype, calibration=variant.calibration)
        options.method = variant.name
        options.distill = False
        options.cosine = False
        result = run_trials(state, dataset, config.dataset.split, options, seeds)
    except (DivergenceError, NumericError) as exc:
        logger.error(f"{variant.name} failed: {exc}")
        return AblationRow(**flags, status="failed", error=str(exc))

    return AblationRow(
        **flags,
        session_acc=result.mean_session_acc,
        pd=performance_drop(result.mean_session_acc),
        final_std=result.final_std,
    )


def cmd_ablate(config: RunConfig, checkpoint: Path, trials: int = 1) -> AblationReport:
    """Train each variant once from the checkpoint and evaluate it over ``trials`` K-shot draws.

    Meta-trained variants are saved under ``<out>/ablation/<name>.json``. A
    variant that diverges is reported as failed and the grid continues.
    """
    if trials < 1:
        raise ConfigError("--trials must be >= 1", fields=["trials"])
    pretrained = load_checkpoint(checkpoint)
    if not pretrained.pretrained:
        logger.warning(f"{checkpoint} was not pre-trained")
    dataset = load_dataset(config)
    stream = build_stream(config, dataset)
    seeds = [config.dataset.split.instance_seed + t for t in range(trials)]

    rows: List[AblationRow] = []
    for variant in variants(config.train.meta.fake_task.phases):
        row = _run_variant(variant, pretrained, config, dataset, stream, seeds)
        rows.append(row)
        if row.status == "ok":
            logger.info(f"{variant.name}: {row.session_acc} PD={row.pd:.2f}")

    report = AblationReport(seed=config.seed, trials=trials, rows=rows)
    write_ablation_report(report, output_dir(config))
    return report


def run(args: argparse.Namespace) -> int:
    report = cmd_ablate(config_from_args(args), args.checkpoint, args.trials)
    for row in report.rows:
        if row.status != "ok":
            print(f"{row.name:24s} failed: {row.error}")
            continue
        print(f"{row.name:24s} " + " ".join(f"{a:6.2f}" for a in row.session_acc) + f"  PD={row.pd:.2f}")
    return 0


def register(subparsers: argparse._SubParsersAction) -> None:
    parser = subparsers.add_parser("ablate", help="Evaluate the component ablation grid")
    add_common_arguments(parser)
    parser.add_argument("--checkpoint", type=Path, required=True, help="Pre-trained checkpoint")
    parser.add_argument("--trials", type=int, default=1)
    parser.set_defaults(func=run)
