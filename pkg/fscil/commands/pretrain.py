"""Cross-entropy pre-training on the base session."""

import argparse
import logging
from pathlib import Path
from typing import Tuple

from fscil.commands.common import (
    add_common_arguments,
    build_stream,
    config_from_args,
    new_state,
    output_dir,
    show_progress,
    training_rng,
)
from fscil.models.network import ModelState
from fscil.schemas.config import RunConfig
from fscil.services.checkpoint_service import save_checkpoint
from fscil.services.report_service import write_train_log
from fscil.services.training_service import pretrain

logger = logging.getLogger(__name__)


def cmd_pretrain(config: RunConfig, progress: bool = False) -> Tuple[ModelState, Path]:
    """Initialize a model, pre-train it and save ``pretrained.json``."""
    stream = build_stream(config)
    state = new_state(config, stream)
    result = pretrain(state, stream.base, config.train.pretrain, training_rng(config), progress=progress)
    out = output_dir(config)
    write_train_log(result.log, out / "pretrain_log.csv", config.seed)
    return result.state, save_checkpoint(result.state, out / "pretrained.json")


def run(args: argparse.Namespace) -> int:
    _, path = cmd_pretrain(config_from_args(args), progress=show_progress())
    print(path)
    return 0


def register(subparsers: argparse._SubParsersAction) -> None:
    parser = subparsers.add_parser("pretrain", help="Pre-train on the base session")
    add_common_arguments(parser)
    parser.set_defaults(func=run)
