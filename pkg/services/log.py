"""Prefixed log lines on stderr.

Keeps the project-wide ``[PREFIX] message`` convention while leaving
stdout free for artifact paths and command results.
"""

from __future__ import annotations

import sys

import config

_LEVELS = {"debug": 10, "info": 20, "warning": 30}


def _threshold() -> int:
    return _LEVELS.get(config.LOG_LEVEL.lower(), 20)


def log(prefix: str, message: str, level: str = "info") -> None:
    """Print ``[PREFIX] message`` to stderr if *level* passes FOA_LOG_LEVEL."""
    if prefix in ("WARNING", "ERROR"):
        level = "warning"
    if _LEVELS.get(level, 20) < _threshold():
        return
    print(f"[{prefix}] {message}", file=sys.stderr)


def debug(prefix: str, message: str) -> None:
    log(prefix, message, level="debug")
