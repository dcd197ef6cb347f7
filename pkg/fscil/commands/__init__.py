"""Command-line subcommands."""

import argparse

from fscil.commands import ablate, evaluate, metatrain, pretrain, sweep, synth, trials


def build_parser() -> argparse.ArgumentParser:
    """Top-level parser with one subparser per command."""
    parser = argparse.ArgumentParser(
        prog="fscil",
        description="Few-shot class-incremental learning with meta-learned calibration",
    )
    subparsers = parser.add_subparsers(dest="command", required=True)
    for module in (synth, pretrain, metatrain, evaluate, ablate, trials, sweep):
        module.register(subparsers)
    return parser


__all__ = ["build_parser"]
