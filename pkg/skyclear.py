# skyclear.py
import argparse
import json
import logging
import sys
import time
from typing import Optional, Sequence

import config
from commands_registry import check_source, register_commands
from constants import SUMMARY_SCHEMA
from core_types import ConfigError, SkyclearError

logger = logging.getLogger("skyclear")

# ---- Logging ----
def setup_logging(verbose: bool = False, quiet: bool = False) -> None:
    level = logging.DEBUG if verbose else logging.WARNING if quiet else getattr(logging, config.LOG_LEVEL, logging.INFO)
    logging.basicConfig(
        level=level,
        format="%(asctime)s [%(levelname)s] %(message)s",
        stream=sys.stderr,
        force=True,
    )

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="skyclear",
        description="Remove light pollution from night photographs with a ground-light scattering model.",
    )
    subparsers = parser.add_subparsers(dest="command", metavar="COMMAND")
    subparsers.required = True
    register_commands(subparsers)
    return parser

def run(argv: Optional[Sequence[str]] = None) -> int:
    """Parse ``argv``, run one subcommand and return the process exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        # argparse exits 2 on usage errors and 0 after --help
        return e.code if isinstance(e.code, int) else 2

    setup_logging(args.verbose, args.quiet)
    started = time.perf_counter()
    try:
        check_source(args)
        summary = args.handler(args) or {}
    except ConfigError as e:
        logger.error(f"❌ {e}")
        return 2
    except (SkyclearError, OSError) as e:
        logger.error(f"❌ {e}")
        return 1

    if args.json:
        out = {
            "schema": SUMMARY_SCHEMA,
            "subcommand": args.command,
            "runtime_ms": round((time.perf_counter() - started) * 1000.0, 3),
            **summary,
        }
        print(json.dumps(out))
    return 0

def main() -> None:
    sys.exit(run())

if __name__ == "__main__":
    main()
