"""Generate a synthetic Gaussian-mixture feature CSV."""

import argparse
import logging
from pathlib import Path

from fscil.commands.common import add_common_arguments, config_from_args, output_dir
from fscil.exceptions import ConfigError
from fscil.schemas.config import RunConfig
from fscil.services.dataset_service import generate_gaussian_mixture, save_feature_csv

logger = logging.getLogger(__name__)


def cmd_synth(config: RunConfig) -> Path:
    """Write ``features.csv`` and its label-map sidecar to the output directory."""
    ds = config.dataset
    if ds.source != "synth":
        raise ConfigError("synth needs dataset.source = 'synth'", fields=["dataset.source"])
    dataset = generate_gaussian_mixture(ds.num_classes, ds.dim, ds.per_class, ds.spread, config.seed)
    path = save_feature_csv(dataset, output_dir(config) / "features.csv")
    logger.info(f"Wrote {len(dataset)} instances of {ds.num_classes} classes to {path}")
    return path


def run(args: argparse.Namespace) -> int:
    print(cmd_synth(config_from_args(args)))
    return 0


def register(subparsers: argparse._SubParsersAction) -> None:
    parser = subparsers.add_parser("synth", help="Generate a synthetic feature CSV")
    add_common_arguments(parser)
    parser.set_defaults(func=run)
