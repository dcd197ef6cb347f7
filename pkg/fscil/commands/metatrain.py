"""Meta-training on sampled fake-incremental tasks."""

import argparse
import logging
from pathlib import Path
from typing import Optional, Tuple

from fscil.commands.common import (
    add_common_arguments,
    build_stream,
    config_from_args,
    new_state,
    output_dir,
    show_progress,
    training_rng,
)
from fscil.exceptions import ConfigError
from fscil.models.network import ModelState
from fscil.schemas.config import RunConfig
from fscil.services.checkpoint_service import load_checkpoint, save_checkpoint
from fscil.services.report_service import write_train_log
from fscil.services.training_service import meta_train

logger = logging.getLogger(__name__)


def cmd_metatrain(
    config: RunConfig,
    checkpoint: Optional[Path] = None,
    allow_cold: bool = False,
    progress: bool = False,
) -> Tuple[ModelState, Path]:
    """Meta-train a pre-trained checkpoint and save ``meta.json``.

    Starting from a checkpoint that was never pre-trained, or from no
    checkpoint at all, requires ``allow_cold``.
    """
    if checkpoint is None and not allow_cold:
        raise ConfigError("metatrain needs --checkpoint (or --allow-cold)", fields=["checkpoint"])
    stream = build_stream(config)
    if checkpoint is None:
        logger.warning("Meta-training from a randomly initialized model")
        state = new_state(config, stream)
    else:
        state = load_checkpoint(checkpoint)
        if not state.pretrained and not allow_cold:
            raise ConfigError(
                f"checkpoint {checkpoint} was not pre-trained; pass --allow-cold to continue",
                fields=["checkpoint"],
            )

    result = meta_train(state, stream.base, config.train.meta, training_rng(config), progress=progress)
    for name, value in result.metrics.items():
        logger.info(f"{name}: {value:.4f}")
    out = output_dir(config)
    write_train_log(result.log, out / "meta_log.csv", config.seed)
    return result.state, save_checkpoint(result.state, out / "meta.json")


def run(args: argparse.Namespace) -> int:
    _, path = cmd_metatrain(
        config_from_args(args), args.checkpoint, args.allow_cold, progress=show_progress()
    )
    print(path)
    return 0


def register(subparsers: argparse._SubParsersAction) -> None:
    parser = subparsers.add_parser("metatrain", help="Meta-train on fake incremental tasks")
    add_common_arguments(parser)
    parser.add_argument("--checkpoint", type=Path, default=None, help="Pre-trained checkpoint")
    parser.add_argument(
        "--allow-cold", action="store_true", help="Allow starting without pre-training"
    )
    parser.set_defaults(func=run)
