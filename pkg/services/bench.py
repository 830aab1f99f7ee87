"""Timing of loss + gradient for sampled vs exhaustive attention graphs.

A synthetic feature map stands in for the extractor output so only the
coherence and contrastive terms are measured.  The moving region is the
``region_size`` pixels closest to the frame center.
"""

from __future__ import annotations

import statistics
import time
from dataclasses import dataclass, field

import numpy as np

import config
from services.attgraph import exhaustive_graph, node_budget, sample_graph
from services.features import FeatureMap
from services.gradcore import Tape, add, tensor
from services.log import log
from services.motionseg import MovingRegion
from services.objective import contrastive_loss, spatial_loss

BENCH_HEADER = "mode,d,region_size,mean_s,std_s"


@dataclass
class BenchCell:
    mode: str                       # stochastic | exhaustive
    d: int
    region_size: int
    samples: list[float] = field(default_factory=list)
    skipped: bool = False
    pairs: int = 0

    @property
    def mean(self) -> float:
        return statistics.fmean(self.samples) if self.samples else float("nan")

    @property
    def std(self) -> float:
        return statistics.stdev(self.samples) if len(self.samples) > 1 else 0.0

    @property
    def median(self) -> float:
        return statistics.median(self.samples) if self.samples else float("nan")

    def csv_row(self) -> str:
        if self.skipped:
            return f"{self.mode},{self.d},{self.region_size},skipped,skipped"
        return f"{self.mode},{self.d},{self.region_size},{self.mean:.9g},{self.std:.9g}"


def central_region(side: int, size: int) -> MovingRegion:
    """The *size* pixels nearest the center of a ``side × side`` frame."""
    if not 2 <= size < side * side:
        raise ValueError(f"region size must be in [2, {side * side - 1}], got {size}")
    ys, xs = np.mgrid[1:side + 1, 1:side + 1]
    c = (side + 1) / 2.0
    dist = (xs - c) ** 2 + (ys - c) ** 2
    order = np.lexsort((np.arange(side * side), dist.reshape(-1)))
    mask = np.zeros(side * side, dtype=bool)
    mask[order[:size]] = True
    first = int(order[0])
    return MovingRegion(mask=mask.reshape(side, side), anchor=(first % side + 1, first // side + 1))


def time_cell(
    fmap: FeatureMap,
    region: MovingRegion,
    mode: str,
    e: int,
    repeats: int,
    rng: np.random.Generator,
    eps: float = config.CONTRASTIVE_EPS,
    normalized: bool = False,
    pair_cap: int = config.BENCH_PAIR_CAP,
) -> BenchCell:
    cell = BenchCell(mode=mode, d=fmap.d, region_size=region.size)
    if mode == "exhaustive":
        n = region.size
        cell.pairs = n * (n - 1) // 2 + n * (region.mask.size - n)
        if cell.pairs > pair_cap:
            cell.skipped = True
            log("BENCH", f"Skipped exhaustive d={fmap.d} |S|={n}: {cell.pairs} pairs over cap {pair_cap}")
            return cell

    budget = node_budget(e)
    for _ in range(repeats):
        graph = exhaustive_graph(region) if mode == "exhaustive" else sample_graph(region, budget, rng=rng)
        idx_in = graph.inside_indices(fmap.width)
        idx_out = graph.outside_indices(fmap.width)
        start = time.perf_counter()
        with Tape() as tape:
            loss = add(spatial_loss(fmap, idx_in, normalized),
                       contrastive_loss(fmap, idx_in, idx_out, eps, normalized))
        tape.backward(loss, [fmap.rows])
        cell.samples.append(time.perf_counter() - start)
        cell.pairs = graph.positive_edges + graph.negative_edges
    return cell


def run_bench(
    dims: list[int],
    sizes: list[int],
    e: int = 10000,
    repeats: int = config.BENCH_REPEATS,
    side: int = config.STREAM_WIDTH,
    seed: int = 0,
    pair_cap: int = config.BENCH_PAIR_CAP,
) -> list[BenchCell]:
    """Every (mode, d, region size) cell, *repeats* timings each."""
    if repeats < 3:
        raise ValueError("bench needs repeats >= 3")
    rng = np.random.default_rng(seed)
    cells: list[BenchCell] = []
    for d in dims:
        rows = tensor(rng.uniform(-1.0, 1.0, size=(side * side, d)), requires_grad=True, name="features")
        fmap = FeatureMap(rows=rows, height=side, width=side)
        for size in sizes:
            region = central_region(side, size)
            for mode in ("stochastic", "exhaustive"):
                cell = time_cell(fmap, region, mode, e, repeats, rng, pair_cap=pair_cap)
                if not cell.skipped:
                    log("BENCH", f"{mode:<10} d={d:<4} |S|={size:<5} median {cell.median * 1e3:.2f} ms "
                                 f"({cell.pairs} pairs)")
                cells.append(cell)
    return cells


def speedups(cells: list[BenchCell]) -> dict[tuple[int, int], float]:
    """Median exhaustive / stochastic time per (d, region size)."""
    table: dict[tuple[int, int], dict[str, BenchCell]] = {}
    for c in cells:
        table.setdefault((c.d, c.region_size), {})[c.mode] = c
    out = {}
    for key, modes in table.items():
        st, ex = modes.get("stochastic"), modes.get("exhaustive")
        if st and ex and not ex.skipped and st.samples and st.median > 0:
            out[key] = ex.median / st.median
    return out
