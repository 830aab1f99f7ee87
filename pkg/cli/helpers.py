"""Shared helpers for command handlers.

Parsing of list-valued flags and ``key=value`` overrides lives here so
the command modules stay short.
"""

from __future__ import annotations

import argparse
import os
from typing import Optional

from services.errors import ConfigValidationError


def emit(path: str) -> None:
    """Artifact paths are the only thing commands print to stdout."""
    print(os.path.normpath(path), flush=True)


def int_list(text: str) -> list[int]:
    try:
        values = [int(p) for p in text.split(",") if p.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not values:
        raise argparse.ArgumentTypeError("expected at least one integer")
    return values


def parse_overrides(pairs: Optional[list[str]]) -> dict[str, str]:
    """``--set key=value`` flags as a raw mapping; malformed pairs are validation errors."""
    overrides: dict[str, str] = {}
    problems = []
    for pair in pairs or []:
        key, sep, value = pair.partition("=")
        if not sep or not key.strip():
            problems.append(f"--set {pair!r}: expected key=value")
            continue
        overrides[key.strip()] = value.strip()
    if problems:
        raise ConfigValidationError(problems)
    return overrides


def add_override_flag(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--set", dest="overrides", action="append", metavar="KEY=VALUE",
        help="Override one run-config key (repeatable)",
    )
