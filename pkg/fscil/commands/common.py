"""Shared helpers for the command-line subcommands."""

import argparse
import logging
from pathlib import Path
from typing import Optional

import numpy as np

from fscil.config import get_settings, load_run_config
from fscil.models.calibration import CalibrationParams
from fscil.models.dataset import Dataset, SessionStream
from fscil.models.network import Classifier, EmbeddingNet, ModelState
from fscil.schemas.config import RunConfig
from fscil.services.dataset_service import (
    generate_gaussian_mixture,
    load_feature_csv,
    split_sessions,
)
from fscil.services.evaluation_service import EvalOptions

logger = logging.getLogger(__name__)


def add_common_arguments(parser: argparse.ArgumentParser) -> None:
    """Options every subcommand accepts."""
    parser.add_argument("--config", type=Path, default=None, help="JSON run configuration")
    parser.add_argument("--seed", type=int, default=None, help="Override the run seed")
    parser.add_argument("--out", type=Path, default=None, help="Override eval.out_dir")
    parser.add_argument(
        "--method",
        choices=["limit", "proto", "cosine", "finetune", "kd"],
        default=None,
        help="Override the evaluation method",
    )
    parser.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="Dotted config override, e.g. train.meta.iterations=10",
    )


def config_from_args(args: argparse.Namespace) -> RunConfig:
    """Load the run configuration named on the command line."""
    return load_run_config(
        args.config,
        overrides=args.overrides,
        seed=args.seed,
        out_dir=args.out,
        method=args.method,
    )


def load_dataset(config: RunConfig) -> Dataset:
    """Read the CSV named in the config or regenerate the synthetic mixture."""
    ds = config.dataset
    if ds.source == "csv":
        return load_feature_csv(ds.csv_path)
    return generate_gaussian_mixture(ds.num_classes, ds.dim, ds.per_class, ds.spread, config.seed)


def build_stream(config: RunConfig, dataset: Optional[Dataset] = None) -> SessionStream:
    """Session stream of the configured split."""
    dataset = dataset if dataset is not None else load_dataset(config)
    return split_sessions(dataset, config.dataset.split)


def new_state(config: RunConfig, stream: SessionStream) -> ModelState:
    """Freshly initialized model over the stream's base classes."""
    rng = np.random.default_rng(config.train.seed)
    m = config.model
    net = EmbeddingNet.initialize([stream.base.dim] + list(m.hidden) + [m.embed_dim], rng)
    classifier = Classifier.initialize(m.embed_dim, stream.session_classes[0], rng)
    calibration = CalibrationParams.initialize(
        m.embed_dim,
        m.attn_dim,
        rng,
        dropout_p=m.dropout,
        dropout_position=m.dropout_position,
        eps=m.layer_norm_eps,
    )
    return ModelState(
        net=net,
        classifier=classifier,
        calibration=calibration,
        base_class_ids=list(stream.session_classes[0]),
        seed=config.seed,
    )


def training_rng(config: RunConfig) -> np.random.Generator:
    """Generator for a training stage, seeded from train.seed."""
    return np.random.default_rng(config.train.seed)


def eval_options(
    config: RunConfig,
    prototype: Optional[bool] = None,
    calibration: Optional[bool] = None,
) -> EvalOptions:
    """Translate the configured method and switches into runner options."""
    method = config.method
    options = EvalOptions(
        method=method,
        cosine_temperature=config.model.cosine_temperature,
        finetune=config.train.finetune,
        kd_lambda=config.train.kd_lambda,
        top_k=config.eval.top_k,
        seed=config.seed,
    )
    if method == "limit":
        options.prototype = config.eval.prototype
        options.calibration = config.eval.calibration
    elif method in ("proto", "cosine"):
        options.prototype = True
        options.calibration = False
        options.cosine = method == "cosine"
    else:
        options.prototype = False
        options.calibration = False
        options.distill = method == "kd"
    if prototype is not None:
        options.prototype = prototype
    if calibration is not None:
        options.calibration = calibration
    return options


def output_dir(config: RunConfig) -> Path:
    """Create and return eval.out_dir."""
    path = Path(config.eval.out_dir)
    path.mkdir(parents=True, exist_ok=True)
    return path


def show_progress() -> bool:
    """Whether long loops draw progress bars."""
    return get_settings().show_progress
