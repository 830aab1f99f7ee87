"""Spatial attention graph over the moving region.

Positive edges join every pair of in-region nodes, negative edges join
in-region to out-of-region nodes.  The stochastic graph keeps roughly
``e`` edges of each type: ``s`` nodes sampled uniformly inside ``S_t``
(always including ``a_t``) and ``o`` nodes drawn from a pixel-rounded
Gaussian around ``a_t`` with standard deviation ``β·√|S_t|``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

import config
from services.log import debug
from services.motionseg import MovingRegion

Coord = tuple[int, int]


@dataclass(frozen=True)
class GraphBudget:
    e: int
    s: int
    o: int


def node_budget(e: int) -> GraphBudget:
    """Node counts for ``e`` edges per type: ``s = ⌊(1+√(1+8e))/2⌋``, ``o = ⌈e/s⌉``."""
    if e < 1:
        raise ValueError(f"edge budget must be >= 1, got {e}")
    s = (1 + math.isqrt(1 + 8 * e)) // 2
    o = -(-e // s)
    return GraphBudget(e=e, s=s, o=o)


@dataclass
class StochasticGraph:
    inside: list[Coord]                 # first element is a_t
    outside: list[Coord]
    short: bool = False                 # sampling gave up before reaching o
    budget: Optional[GraphBudget] = field(default=None, repr=False)

    @property
    def positive_edges(self) -> int:
        n = len(self.inside)
        return n * (n - 1) // 2

    @property
    def negative_edges(self) -> int:
        return len(self.inside) * len(self.outside)

    def inside_indices(self, width: int) -> np.ndarray:
        return _ravel(self.inside, width)

    def outside_indices(self, width: int) -> np.ndarray:
        return _ravel(self.outside, width)


def _ravel(coords: list[Coord], width: int) -> np.ndarray:
    return np.array([(y - 1) * width + (x - 1) for x, y in coords], dtype=np.int64)


def _others(region: MovingRegion) -> list[Coord]:
    return [c for c in region.coords() if c != region.anchor]


def sample_graph(
    region: MovingRegion,
    budget: GraphBudget,
    beta: int = config.SPREAD_FACTOR,
    rng: Optional[np.random.Generator] = None,
    max_rounds: Optional[int] = None,
) -> Optional[StochasticGraph]:
    """Sample ``G̃_t``; returns None when the region is empty.

    Gaussian draws are made in a single batch of *max_rounds* (default
    ``20·o``) and consumed in order; samples off-frame, inside ``S_t`` or
    already taken are rejected.
    """
    if not region.contains_attention:
        return None
    if beta < 1:
        raise ValueError(f"spread factor must be >= 1, got {beta}")
    rng = rng if rng is not None else np.random.default_rng()

    others = _others(region)
    k = min(budget.s - 1, len(others))
    picked = rng.choice(len(others), size=k, replace=False) if k > 0 else []
    inside = [region.anchor] + [others[int(i)] for i in picked]

    h, w = region.mask.shape
    rounds = max_rounds if max_rounds is not None else config.MAX_ROUNDS_PER_NODE * budget.o
    sigma = beta * math.sqrt(region.size)
    draws = rng.normal(0.0, sigma, size=(rounds, 2)) + np.asarray(region.anchor, dtype=np.float64)
    pixels = np.floor(draws + 0.5).astype(np.int64)

    outside: list[Coord] = []
    taken: set[Coord] = set()
    for px, py in pixels:
        if len(outside) == budget.o:
            break
        c = (int(px), int(py))
        if not (1 <= c[0] <= w and 1 <= c[1] <= h) or c in taken or region.mask[c[1] - 1, c[0] - 1]:
            continue
        taken.add(c)
        outside.append(c)

    short = len(outside) < budget.o
    if short:
        debug("GRAPH", f"Outside sampling stopped at {len(outside)}/{budget.o} after {rounds} draws")
    return StochasticGraph(inside=inside, outside=outside, short=short, budget=budget)


def exhaustive_graph(region: MovingRegion) -> Optional[StochasticGraph]:
    """Every pixel of ``S_t`` inside (anchor first) and every other pixel outside."""
    if not region.contains_attention:
        return None
    inside = [region.anchor] + _others(region)
    h, w = region.mask.shape
    outside = [(int(i % w) + 1, int(i // w) + 1) for i in np.flatnonzero(~region.mask)]
    return StochasticGraph(inside=inside, outside=outside)
