"""Open-set, class-incremental template classifier.

Each supervision stores the feature vector of the supervised pixel as a
template.  A feature is assigned the class of its nearest template when
that distance is at most ``ξ``; otherwise it is unknown (class 0).
Templates are re-encoded with the current weights from the stored
supervised frames, a few frames per step in round-robin order.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

import config
from memory.models import Frame
from services.errors import ShapeError
from services.log import debug, log

DISTANCE_KINDS = ("squared-euclidean", "cosine")
_DISTANCE_ALIASES = {"euclidean": "squared-euclidean", "sqeuclidean": "squared-euclidean"}

FrameSource = Callable[[int], Optional[Frame]]


def normalize_distance_kind(kind: str) -> str:
    kind = _DISTANCE_ALIASES.get(kind, kind)
    if kind not in DISTANCE_KINDS:
        raise ValueError(f"distance kind must be one of {', '.join(DISTANCE_KINDS)}, got {kind!r}")
    return kind


@dataclass
class TemplateEntry:
    template: np.ndarray
    class_id: int
    frame: int
    x: int
    y: int
    stale: bool = False


@dataclass
class Prediction:
    class_id: int                                   # 0 = unknown
    scores: dict[int, float] = field(default_factory=dict)
    min_distance: float = float("inf")


def pairwise_distances(templates: np.ndarray, features: np.ndarray, kind: str) -> np.ndarray:
    """``(N × K)`` distances from *features* rows to *templates* rows."""
    if kind == "squared-euclidean":
        diff = features[:, None, :] - templates[None, :, :]
        return np.einsum("nkd,nkd->nk", diff, diff)
    f_norm = np.linalg.norm(features, axis=1, keepdims=True)
    k_norm = np.linalg.norm(templates, axis=1, keepdims=True)
    denom = f_norm * k_norm.T
    sims = np.divide(features @ templates.T, denom, out=np.zeros((features.shape[0], templates.shape[0])),
                     where=denom > 0)
    return 1.0 - sims


class TemplateStore:
    """Templates ``ζ`` with threshold ``ξ`` and refresh batch cap ``b``."""

    def __init__(
        self,
        distance: str = config.DISTANCE_KIND,
        xi: float = config.OPENSET_THRESHOLD,
        batch_cap: int = 1,
        width: Optional[int] = None,
        height: Optional[int] = None,
    ):
        if batch_cap < 1:
            raise ValueError("batch cap b must be >= 1")
        self.distance = normalize_distance_kind(distance)
        self.xi = xi
        self.batch_cap = batch_cap
        self.width = width
        self.height = height
        self.entries: list[TemplateEntry] = []
        self._cursor = 0
        self._refresh_notice = False

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def known_classes(self) -> set[int]:
        return {e.class_id for e in self.entries}

    @property
    def d(self) -> Optional[int]:
        return int(self.entries[0].template.size) if self.entries else None

    # ── Supervision ─────────────────────────────────────

    def add_supervision(self, feature: np.ndarray, class_id: int, frame: int, coords: tuple[int, int]) -> TemplateEntry:
        if class_id < 1:
            raise ValueError(f"supervised class id must be >= 1, got {class_id}")
        x, y = int(coords[0]), int(coords[1])
        if self.width is not None and self.height is not None:
            if not (1 <= x <= self.width and 1 <= y <= self.height):
                raise ShapeError("add_supervision", [(self.height, self.width)],
                                 f"coordinate ({x}, {y}) outside frame")
        vec = np.array(feature, dtype=np.float64).reshape(-1)
        if self.d is not None and vec.size != self.d:
            raise ShapeError("add_supervision", [(self.d,), vec.shape])
        new_class = class_id not in self.known_classes
        entry = TemplateEntry(template=vec, class_id=class_id, frame=frame, x=x, y=y)
        self.entries.append(entry)
        log("TPL", f"Template {len(self.entries)} for class {class_id} from frame {frame} at ({x}, {y})"
                   + (" (new class)" if new_class else ""))
        return entry

    # ── Prediction ──────────────────────────────────────

    def _ordered(self) -> tuple[np.ndarray, np.ndarray]:
        order = sorted(range(len(self.entries)), key=lambda i: (self.entries[i].class_id, i))
        templates = np.stack([self.entries[i].template for i in order])
        classes = np.array([self.entries[i].class_id for i in order], dtype=np.int64)
        return templates, classes

    def nearest(self, features: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Nearest template class and its distance for each row of *features*.

        Ties go to the lowest class id, then the earliest entry.  With an
        empty store the class is 0 and the distance infinite.
        """
        feats = np.atleast_2d(np.asarray(features, dtype=np.float64))
        n = feats.shape[0]
        if not self.entries:
            return np.zeros(n, dtype=np.int64), np.full(n, np.inf)
        if feats.shape[1] != self.d:
            raise ShapeError("predict", [(self.d,), feats.shape[1:]])
        templates, classes = self._ordered()
        dist = pairwise_distances(templates, feats, self.distance)
        best = np.argmin(dist, axis=1)
        return classes[best], dist[np.arange(n), best]

    def predict(self, feature: np.ndarray, xi: Optional[float] = None) -> Prediction:
        xi = self.xi if xi is None else xi
        vec = np.asarray(feature, dtype=np.float64).reshape(1, -1)
        if not self.entries:
            return Prediction(class_id=0)
        templates, classes = self._ordered()
        if vec.shape[1] != templates.shape[1]:
            raise ShapeError("predict", [templates.shape[1:], vec.shape[1:]])
        dist = pairwise_distances(templates, vec, self.distance)[0]
        scores = {int(c): -float(dist[classes == c].min()) for c in np.unique(classes)}
        best = int(np.argmin(dist))
        min_d = float(dist[best])
        return Prediction(class_id=int(classes[best]) if min_d <= xi else 0, scores=scores, min_distance=min_d)

    def predict_map(self, rows: np.ndarray, xi: Optional[float] = None) -> np.ndarray:
        """Class id for every pixel row of a feature map."""
        xi = self.xi if xi is None else xi
        cls, dist = self.nearest(rows)
        return np.where(dist <= xi, cls, 0)

    # ── Refresh ─────────────────────────────────────────

    def supervised_frames(self) -> list[int]:
        """``H_t``: distinct source frames in order of first supervision."""
        seen: dict[int, None] = {}
        for e in self.entries:
            seen.setdefault(e.frame, None)
        return list(seen)

    def refresh(self, encode: Callable[[Frame], "object"], frames: FrameSource, all_frames: bool = False) -> list[int]:
        """Re-encode templates of up to ``b − 1`` stored frames with the current weights.

        *encode* maps a frame to a feature map exposing ``restrict``;
        *frames* returns the stored frame for an index, or None when it is
        missing (its entries are then flagged stale).  Returns the frames
        refreshed.
        """
        history = self.supervised_frames()
        if not history:
            return []
        if all_frames:
            batch = history
        else:
            if self.batch_cap == 1:
                if not self._refresh_notice:
                    log("TPL", "Template refresh disabled (b = 1)")
                    self._refresh_notice = True
                return []
            take = min(self.batch_cap - 1, len(history))
            start = self._cursor % len(history)
            batch = [history[(start + i) % len(history)] for i in range(take)]
            self._cursor = (start + take) % len(history)

        done = []
        for r in batch:
            members = [e for e in self.entries if e.frame == r]
            frame = frames(r)
            if frame is None:
                for e in members:
                    if not e.stale:
                        log("WARNING", f"Supervised frame {r} unavailable; template of class {e.class_id} is stale")
                    e.stale = True
                continue
            fmap = encode(frame)
            for e in members:
                e.template = fmap.restrict((e.x, e.y))
                e.stale = False
            done.append(r)
        debug("TPL", f"Refreshed templates of frames {done}")
        return done


def refresh_templates(
    store: TemplateStore,
    encode: Callable[[Frame], "object"],
    frames: FrameSource,
    all_frames: bool = False,
) -> list[int]:
    return store.refresh(encode, frames, all_frames=all_frames)
