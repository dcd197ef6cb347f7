"""Hyper-parameter sweeps over fake-task shape and incremental shot count."""

import argparse
import logging
from itertools import product
from pathlib import Path
from typing import Dict, List, Optional, Sequence

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
from fscil.exceptions import CapacityError, ConfigError, DivergenceError, NumericError
from fscil.models.dataset import Dataset, SessionStream
from fscil.models.network import ModelState
from fscil.schemas.config import FakeTaskSpec, RunConfig
from fscil.schemas.report import SweepPoint, SweepReport
from fscil.services.checkpoint_service import load_checkpoint
from fscil.services.evaluation_service import performance_drop, run_trials
from fscil.services.report_service import write_sweep_report
from fscil.services.training_service import meta_train

logger = logging.getLogger(__name__)

SWEEP_KINDS = ("fake_way_shot", "phases", "shot")

DEFAULT_VALUES: Dict[str, List[int]] = {
    "fake_way_shot": [1, 5, 10, 15, 20],
    "phases": [1, 2, 3, 4, 5],
    "shot": [1, 5, 10, 20],
}


def sweep_settings(kind: str, values: Optional[Sequence[int]] = None) -> List[Dict[str, int]]:
    """Settings visited by a sweep; fake_way_shot crosses the values with themselves."""
    if kind not in SWEEP_KINDS:
        raise ConfigError(f"unknown sweep kind {kind!r}", fields=["kind"])
    values = list(values) if values else DEFAULT_VALUES[kind]
    if any(v < 1 for v in values):
        raise ConfigError("sweep values must be >= 1", fields=["values"])
    if kind == "fake_way_shot":
        return [{"fake_way": w, "fake_shot": s} for w, s in product(values, values)]
    if kind == "phases":
        return [{"phases": c} for c in values]
    return [{"shot": k} for k in values]


def infeasible_reason(spec: FakeTaskSpec, base: Dataset) -> Optional[str]:
    """Why fake tasks of this shape cannot be drawn from the base session, if they cannot."""
    classes = len(base.classes)
    if spec.fake_way * spec.phases >= classes:
        return f"fake_way * phases = {spec.fake_way * spec.phases} needs more than {classes} base classes"
    fewest = min(base.class_counts().values())
    if spec.fake_shot + spec.query_shot > fewest:
        return f"fake_shot + query_shot = {spec.fake_shot + spec.query_shot} exceeds {fewest} instances"
    return None


def _meta_trained(pretrained: ModelState, config: RunConfig, spec: FakeTaskSpec, stream: SessionStream) -> ModelState:
    meta_cfg = config.train.meta.model_copy(update={"fake_task": spec})
    return meta_train(
        pretrained.copy(), stream.base, meta_cfg, training_rng(config), progress=show_progress()
    ).state


def _evaluate(
    setting: Dict[str, int],
    state: ModelState,
    config: RunConfig,
    dataset: Dataset,
    seeds: List[int],
) -> SweepPoint:
    split = config.dataset.split
    if "shot" in setting:
        split = split.model_copy(update={"shot": setting["shot"]})
    result = run_trials(state, dataset, split, eval_options(config), seeds)
    return SweepPoint(
        setting=setting,
        session_acc=result.mean_session_acc,
        pd=performance_drop(result.mean_session_acc),
        final_mean=result.final_mean,
        final_std=result.final_std,
    )


def _run_point(
    setting: Dict[str, int],
    pretrained: ModelState,
    shared: Optional[ModelState],
    config: RunConfig,
    dataset: Dataset,
    stream: SessionStream,
    seeds: List[int],
) -> SweepPoint:
    """Train (unless a shared model is given) and evaluate one setting."""
    fake_settings = {k: v for k, v in setting.items() if k != "shot"}
    spec = config.train.meta.fake_task.model_copy(update=fake_settings)
    try:
        if shared is None:
            reason = infeasible_reason(spec, stream.base)
            if reason:
                logger.warning(f"skipping {setting}: {reason}")
                return SweepPoint(setting=setting, status="skipped", error=reason)
            state = _meta_trained(pretrained, config, spec, stream)
        else:
            state = shared
        return _evaluate(setting, state, config, dataset, seeds)
    except CapacityError as exc:
        logger.warning(f"skipping {setting}: {exc}")
        return SweepPoint(setting=setting, status="skipped", error=str(exc))
    except (DivergenceError, NumericError) as exc:
        logger.error(f"{setting} failed: {exc}")
        return SweepPoint(setting=setting, status="failed", error=str(exc))


def cmd_sweep(
    config: RunConfig,
    checkpoint: Path,
    kind: str,
    trials: int = 1,
    values: Optional[Sequence[int]] = None,
) -> SweepReport:
    """Meta-train and evaluate the configured method at every setting of one parameter.

    ``fake_way_shot`` and ``phases`` meta-train from the checkpoint per
    setting; ``shot`` meta-trains once with the configured fake tasks and
    varies the incremental K. Settings the data cannot support are reported
    as skipped, diverging ones as failed.
    """
    if trials < 1:
        raise ConfigError("--trials must be >= 1", fields=["trials"])
    settings = sweep_settings(kind, values)
    pretrained = load_checkpoint(checkpoint)
    if not pretrained.pretrained:
        logger.warning(f"{checkpoint} was not pre-trained")
    dataset = load_dataset(config)
    stream = build_stream(config, dataset)
    seeds = [config.dataset.split.instance_seed + t for t in range(trials)]

    shared: Optional[ModelState] = None
    if kind == "shot":
        shared = _meta_trained(pretrained, config, config.train.meta.fake_task, stream)

    points: List[SweepPoint] = []
    for setting in settings:
        point = _run_point(setting, pretrained, shared, config, dataset, stream, seeds)
        points.append(point)
        if point.status == "ok":
            logger.info(f"{setting}: final {point.final_mean:.2f} ± {point.final_std:.2f}")

    report = SweepReport(seed=config.seed, kind=kind, trials=trials, points=points)
    write_sweep_report(report, output_dir(config))
    return report


def run(args: argparse.Namespace) -> int:
    report = cmd_sweep(config_from_args(args), args.checkpoint, args.kind, args.trials, args.values)
    for point in report.points:
        label = " ".join(f"{k}={v}" for k, v in point.setting.items())
        if point.status != "ok":
            print(f"{label:24s} {point.status}: {point.error}")
            continue
        print(f"{label:24s} " + " ".join(f"{a:6.2f}" for a in point.session_acc) + f"  PD={point.pd:.2f}")
    return 0


def register(subparsers: argparse._SubParsersAction) -> None:
    parser = subparsers.add_parser("sweep", help="Sweep fake-task shape, phases or incremental shot")
    add_common_arguments(parser)
    parser.add_argument("--checkpoint", type=Path, required=True, help="Pre-trained checkpoint")
    parser.add_argument("--kind", choices=SWEEP_KINDS, required=True)
    parser.add_argument("--values", type=int, nargs="+", default=None, help="Override the swept values")
    parser.add_argument("--trials", type=int, default=1)
    parser.set_defaults(func=run)
