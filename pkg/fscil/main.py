"""Command-line entry point."""

import logging
import sys
from typing import List, Optional

from fscil.commands import build_parser
from fscil.config import get_settings
from fscil.exceptions import ConfigError, DivergenceError, FSCILError, NumericError

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2
EXIT_NUMERIC = 3


def configure_logging(level: Optional[str] = None) -> None:
    """Root logging configuration for the command line."""
    logging.basicConfig(
        level=(level or get_settings().log_level).upper(),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )


def main(argv: Optional[List[str]] = None) -> int:
    """Parse arguments, run a subcommand and map failures to exit codes."""
    args = build_parser().parse_args(argv)
    configure_logging()
    try:
        return args.func(args)
    except ConfigError as exc:
        fields = f" [{', '.join(exc.fields)}]" if exc.fields else ""
        logger.error(f"configuration error: {exc}{fields}")
        return EXIT_CONFIG
    except (DivergenceError, NumericError) as exc:
        logger.error(f"numeric failure: {exc}")
        return EXIT_NUMERIC
    except FSCILError as exc:
        logger.error(f"{type(exc).__name__}: {exc}")
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
