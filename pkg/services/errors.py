"""Structured exceptions raised by the numerical and storage layers.

Every error keeps the fields it was raised with as attributes so callers
(and tests) can inspect them without parsing messages.  The CLI maps
``ConfigValidationError`` to exit code 2 and any other ``FoaError`` to 1.
"""

from __future__ import annotations

from typing import Optional


class FoaError(Exception):
    """Base class for all project errors."""


class ShapeError(FoaError):
    def __init__(self, op: str, shapes: list[tuple[int, ...]], detail: str = ""):
        self.op = op
        self.shapes = [tuple(s) for s in shapes]
        self.detail = detail
        msg = f"{op}: incompatible shapes {self.shapes}"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


class NonFiniteError(FoaError):
    def __init__(self, op: str, detail: str = ""):
        self.op = op
        self.detail = detail
        super().__init__(f"{op}: non-finite values{' (' + detail + ')' if detail else ''}")


class TapeError(FoaError):
    """Misuse of a gradient tape (reuse, non-scalar loss, missing record)."""


class StreamError(FoaError):
    def __init__(self, message: str, frame: Optional[int] = None, obj: Optional[int] = None):
        self.frame = frame
        self.obj = obj
        where = []
        if frame is not None:
            where.append(f"frame {frame}")
        if obj is not None:
            where.append(f"object {obj}")
        prefix = f"[{', '.join(where)}] " if where else ""
        super().__init__(prefix + message)


class BundleFormatError(FoaError):
    def __init__(self, path: str, reason: str):
        self.path = path
        self.reason = reason
        super().__init__(f"{path}: {reason}")


class FoaFormatError(FoaError):
    def __init__(self, path: str, line: int, reason: str):
        self.path = path
        self.line = line
        self.reason = reason
        super().__init__(f"{path}:{line}: {reason}")


class CheckpointError(FoaError):
    def __init__(self, path: str, reason: str):
        self.path = path
        self.reason = reason
        super().__init__(f"{path}: {reason}")


class ConfigValidationError(FoaError):
    def __init__(self, problems: list[str]):
        self.problems = list(problems)
        super().__init__("invalid configuration:\n  " + "\n  ".join(self.problems))


class ProtocolError(FoaError):
    def __init__(self, frame: int, cause: Exception):
        self.frame = frame
        self.cause = cause
        super().__init__(f"protocol aborted at frame {frame}: {cause}")
