"""Command-line surface: argument parsing and dispatch.

Subcommands live in ``cli/commands``; each module registers its own
subparsers.  Handlers return an exit code.  Errors raised below the CLI
are mapped here: 2 for configuration problems, 1 for anything else.
"""

from __future__ import annotations

import argparse
from typing import Optional

from cli.commands import register_all
from services.errors import ConfigValidationError, FoaError
from services.log import log


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="foa",
        description="Online pixel-wise representation learning on synthetic streams.",
    )
    subparsers = parser.add_subparsers(dest="command", metavar="COMMAND", required=True)
    register_all(subparsers)
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        # argparse exits 2 on usage errors, which is the validation code too
        return int(e.code or 0)

    try:
        return int(args.handler(args) or 0)
    except ConfigValidationError as e:
        log("ERROR", str(e))
        return 2
    except FoaError as e:
        log("ERROR", str(e))
        return 1
    except (OSError, ValueError) as e:
        log("ERROR", f"{type(e).__name__}: {e}")
        return 1
