"""``.foa`` trajectory files: one ``foa_x,foa_y,v_x,v_y,saccade`` line per frame."""

from __future__ import annotations

import math
import os

from memory.models import AttentionState
from services.errors import FoaFormatError


def format_state(state: AttentionState) -> str:
    x, y = state.position
    vx, vy = state.velocity
    return f"{x:.9g},{y:.9g},{vx:.9g},{vy:.9g},{int(state.saccade)}"


def write_foa(trajectory: list[AttentionState], path: str) -> str:
    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        for state in trajectory:
            f.write(format_state(state) + "\n")
    return path


def read_foa(path: str) -> list[AttentionState]:
    trajectory: list[AttentionState] = []
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            trajectory.append(_parse(line, path, lineno))
    return trajectory


def _parse(line: str, path: str, lineno: int) -> AttentionState:
    parts = line.split(",")
    if len(parts) != 5:
        raise FoaFormatError(path, lineno, f"expected 5 fields, got {len(parts)}")
    try:
        x, y, vx, vy = (float(p) for p in parts[:4])
    except ValueError:
        raise FoaFormatError(path, lineno, "non-numeric field") from None
    if not all(math.isfinite(v) for v in (x, y, vx, vy)):
        raise FoaFormatError(path, lineno, "non-finite value")
    flag = parts[4].strip()
    if flag not in ("0", "1"):
        raise FoaFormatError(path, lineno, f"saccade flag must be 0 or 1, got {flag!r}")
    return AttentionState(position=(x, y), velocity=(vx, vy), saccade=flag == "1")
