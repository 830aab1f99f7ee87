"""Connected moving region around the attention point.

Geodesic dilation from ``a_t`` through pixels whose flow magnitude exceeds
``γ``, with a 4- or 8-connected structuring element.  The seed itself is
taken unconditionally; a region that never grows past the seed is cleared
to the empty set.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

import config
from memory.models import FlowField
from services.errors import StreamError


@dataclass(frozen=True, eq=False)
class MovingRegion:
    """Pixels of ``S_t`` as a boolean ``h × w`` mask plus the 1-based anchor."""

    mask: np.ndarray
    anchor: tuple[int, int]

    @property
    def contains_attention(self) -> bool:
        return bool(self.mask.any())

    @property
    def size(self) -> int:
        return int(self.mask.sum())

    def __len__(self) -> int:
        return self.size

    def indices(self) -> np.ndarray:
        """Raveled row-major indices of the members, ascending."""
        return np.flatnonzero(self.mask)

    def coords(self) -> list[tuple[int, int]]:
        w = self.mask.shape[1]
        return [(int(i % w) + 1, int(i // w) + 1) for i in self.indices()]

    def __contains__(self, xy: tuple[int, int]) -> bool:
        x, y = xy
        h, w = self.mask.shape
        return 1 <= x <= w and 1 <= y <= h and bool(self.mask[y - 1, x - 1])


def round_coords(a: tuple[float, float]) -> tuple[int, int]:
    """Nearest pixel, halves rounded up."""
    return int(math.floor(a[0] + 0.5)), int(math.floor(a[1] + 0.5))


def segment_moving_region(
    flow: FlowField,
    a_t: tuple[float, float],
    gamma: float = config.MOTION_THRESHOLD,
    eight_connected: bool = config.EIGHT_CONNECTED,
) -> MovingRegion:
    """Moving region ``S_t`` containing *a_t* (rounded to the nearest pixel)."""
    if gamma <= 0:
        raise ValueError("gamma must be > 0")
    moving = flow.magnitude() > gamma
    h, w = moving.shape
    x, y = round_coords(a_t)
    if not (1 <= x <= w and 1 <= y <= h):
        raise StreamError(f"attention point ({x}, {y}) outside {w}x{h} frame")

    seed = np.zeros((h, w), dtype=bool)
    seed[y - 1, x - 1] = True
    structure = ndimage.generate_binary_structure(2, 2 if eight_connected else 1)
    region = ndimage.binary_dilation(seed, structure=structure, iterations=-1, mask=moving | seed)

    if region.sum() == 1:
        region[:] = False
    return MovingRegion(mask=region, anchor=(x, y))
