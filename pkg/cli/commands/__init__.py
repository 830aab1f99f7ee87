"""Command registration: every module here adds its subparsers."""

from __future__ import annotations

import argparse
import importlib

from services.log import debug

# Paths are relative to the cli package (dot-separated)
_COMMAND_MODULES = [
    "cli.commands.stream_cmd",
    "cli.commands.run_cmd",
    "cli.commands.bench_cmd",
]


def register_all(subparsers: argparse._SubParsersAction) -> None:
    """Let each command module add its subcommands to *subparsers*."""
    for name in _COMMAND_MODULES:
        importlib.import_module(name).register(subparsers)
        debug("INFO", f"Registered commands from {name}")
