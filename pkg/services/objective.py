"""Unsupervised learning criterion and the online update.

Three terms, each built on the tape from a :class:`FeatureMap`:

- temporal coherence between the feature at ``a_t`` and the cached feature
  at ``a_{t-1}`` (a constant, computed with the previous weights),
- spatial coherence over unordered pairs of in-region nodes,
- a contrastive term over in-region × out-of-region pairs.

Pair distances come from explicit row differences, so equal features give
exactly zero distance.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

import config
from services.attgraph import StochasticGraph
from services.errors import ShapeError
from services.features import FeatureMap
from services.gradcore import (
    Tensor,
    add,
    dot,
    gather_rows,
    matmul,
    mul,
    pair_sq_dist,
    reciprocal,
    reshape,
    square,
    sub,
    sum_,
    tensor,
    transpose,
)
from services.log import log


@dataclass(frozen=True)
class LossWeights:
    lambda_t: float = config.LAMBDA_T
    lambda_s: float = config.LAMBDA_S
    lambda_c: float = config.LAMBDA_C
    eps: float = config.CONTRASTIVE_EPS
    lr: float = config.LEARNING_RATE
    normalized: bool = config.NORMALIZE_FEATURES

    def problems(self) -> list[str]:
        out = []
        for name in ("lambda_t", "lambda_s", "lambda_c"):
            if getattr(self, name) < 0:
                out.append(f"{name} must be >= 0")
        if self.eps <= 0:
            out.append("eps must be > 0")
        if self.lr <= 0:
            out.append("learning rate must be > 0")
        return out


@dataclass
class LossReport:
    l_t: float
    l_s: float
    l_c: float
    total: float
    delta: int
    inside: int
    outside: int

    CSV_HEADER = "t,l_t,l_s,l_c,total,delta,inside,outside"

    def csv_row(self, t: int) -> str:
        return (f"{t},{self.l_t:.9g},{self.l_s:.9g},{self.l_c:.9g},{self.total:.9g},"
                f"{self.delta},{self.inside},{self.outside}")


def _zero() -> Tensor:
    return tensor(0.0)


# ── Terms ────────────────────────────────────────────────


def temporal_loss(f_now: Tensor, f_prev: Optional[np.ndarray], delta: int, normalized: bool) -> Tensor:
    """``δ ‖f_now − f_prev‖²``, or ``δ (1 − ⟨f_now, f_prev⟩)`` when normalized."""
    if not delta or f_prev is None:
        return _zero()
    prev = np.asarray(f_prev, dtype=np.float64)
    if prev.shape != f_now.shape:
        raise ShapeError("temporal_loss", [f_now.shape, prev.shape])
    if normalized:
        return sub(1.0, dot(f_now, tensor(prev)))
    return sum_(square(sub(f_now, tensor(prev))))


def _gather(fmap: FeatureMap, index: np.ndarray) -> Tensor:
    if index.size and (index.min() < 0 or index.max() >= fmap.rows.shape[0]):
        raise ShapeError("gather", [fmap.rows.shape], "node outside feature map")
    return gather_rows(fmap.rows, index)


def spatial_loss(fmap: FeatureMap, inside: np.ndarray, normalized: bool) -> Tensor:
    """Sum over unordered in-region pairs of ``‖f_x − f_z‖²`` (or ``1 − ⟨f_x, f_z⟩``).

    *inside* holds raveled pixel indices.
    """
    inside = np.asarray(inside, dtype=np.int64)
    n = inside.size
    if n < 2:
        return _zero()
    feats = _gather(fmap, inside)
    if normalized:
        upper = tensor(np.triu(np.ones((n, n)), k=1))
        gram = matmul(feats, transpose(feats))
        return sub(n * (n - 1) / 2.0, sum_(mul(gram, upper)))
    # symmetric with an exact zero diagonal
    return mul(sum_(pair_sq_dist(feats, feats)), 0.5)


def contrastive_loss(
    fmap: FeatureMap,
    inside: np.ndarray,
    outside: np.ndarray,
    eps: float,
    normalized: bool,
) -> Tensor:
    """``(Σ ‖f_x − f_z‖² + ε)⁻¹`` over in × out pairs, or ``Σ (1 + ⟨f_x, f_z⟩)`` when normalized."""
    if eps <= 0:
        raise ValueError("contrastive eps must be > 0")
    inside = np.asarray(inside, dtype=np.int64)
    outside = np.asarray(outside, dtype=np.int64)
    if inside.size == 0 or outside.size == 0:
        return _zero()
    f_in = _gather(fmap, inside)
    f_out = _gather(fmap, outside)
    if normalized:
        pairs = float(inside.size * outside.size)
        return add(pairs, sum_(matmul(f_in, transpose(f_out))))
    return reciprocal(add(sum_(pair_sq_dist(f_in, f_out)), eps))


def total_loss(l_t: Tensor, l_s: Tensor, l_c: Tensor, weights: LossWeights) -> Tensor:
    """``λ_T L_T + λ_S L_S + λ_C L_C``."""
    return add(add(mul(l_t, weights.lambda_t), mul(l_s, weights.lambda_s)), mul(l_c, weights.lambda_c))


def frame_loss(
    fmap: FeatureMap,
    anchor: tuple[int, int],
    f_prev: Optional[np.ndarray],
    delta: int,
    graph: Optional[StochasticGraph],
    weights: LossWeights,
) -> tuple[Tensor, LossReport]:
    """All terms for one frame; an absent graph zeroes the spatial and contrastive terms."""
    f_now = reshape(gather_rows(fmap.rows, [fmap.row_index(anchor)]), (fmap.d,))
    l_t = temporal_loss(f_now, f_prev, delta, weights.normalized)
    if graph is None:
        l_s, l_c = _zero(), _zero()
        n_in = n_out = 0
    else:
        idx_in = graph.inside_indices(fmap.width)
        idx_out = graph.outside_indices(fmap.width)
        l_s = spatial_loss(fmap, idx_in, weights.normalized)
        l_c = contrastive_loss(fmap, idx_in, idx_out, weights.eps, weights.normalized)
        n_in, n_out = idx_in.size, idx_out.size
    total = total_loss(l_t, l_s, l_c, weights)
    report = LossReport(
        l_t=l_t.item(), l_s=l_s.item(), l_c=l_c.item(), total=total.item(),
        delta=int(bool(delta) and f_prev is not None), inside=n_in, outside=n_out,
    )
    return total, report


# ── Update ───────────────────────────────────────────────


def online_step(params: list[Tensor], grads: dict[Tensor, np.ndarray], lr: float) -> bool:
    """Plain SGD ``ω ← ω − α ∇L`` in place; returns False when the step was skipped."""
    for p in params:
        g = grads.get(p)
        if g is not None and not np.all(np.isfinite(g)):
            log("LEARN", f"Skipped update: non-finite gradient for {p.name or 'parameter'}", level="warning")
            return False
    for p in params:
        g = grads.get(p)
        if g is not None:
            p.data -= lr * g
    return True
