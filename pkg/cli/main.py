"""Main entry point for the specification mining pipeline."""

import argparse
import sys
from typing import List, Optional

from pydantic import ValidationError

from cli.common import UsageError
from cli.handlers import data, evaluation, model
from core import __version__
from core.errors import SpecMineError
from core.logger import log


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, help="Seed for every random choice (default: SPECMINE_SEED)")
    common.add_argument("--ledger", metavar="URL", help="SQLAlchemy URL of the run ledger")
    common.add_argument("--manifest", metavar="PATH", help="Write the run manifest to PATH")

    parser = argparse.ArgumentParser(
        prog="specmine",
        description="Mine EFSM specifications from contract transaction histories.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    subparsers = parser.add_subparsers(dest="command", metavar="COMMAND")
    subparsers.required = True

    data.register(subparsers, common)
    model.register(subparsers, common)
    evaluation.register(subparsers, common)
    return parser


def _close(args: argparse.Namespace, status: str, error: Optional[str] = None) -> None:
    run = getattr(args, "run", None)
    if run is None:
        return
    try:
        run.close_ledger(status, error)
    except Exception as e:
        log.warning(f"Could not record the run in the ledger: {e}")


def cmd_pipeline(argv: Optional[List[str]] = None) -> int:
    """
    Run one subcommand.

    Returns:
        0 on success, 1 on data or configuration errors, 2 on usage errors
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return 0 if e.code is None else int(e.code)

    try:
        code = args.handler(args)
    except UsageError as e:
        log.error(f"Usage: {e}")
        _close(args, "failed", str(e))
        return 2
    except SpecMineError as e:
        log.error(e.describe())
        _close(args, "failed", e.describe())
        return 1
    except (OSError, ValidationError, ValueError) as e:
        log.error(f"[{args.command}] {e}")
        _close(args, "failed", str(e))
        return 1

    _close(args, "ok")
    return code


def main() -> None:
    try:
        sys.exit(cmd_pipeline())
    except KeyboardInterrupt:
        log.info("Interrupted")
        sys.exit(130)


if __name__ == "__main__":
    main()
