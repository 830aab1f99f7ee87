"""Data models shared by the stream, attention, and protocol layers.

Coordinates follow the frame lattice ``{1..w} × {1..h}``: ``x`` is the
column and ``y`` the row, both 1-based.  Arrays are indexed ``[y-1, x-1]``
and raveled indices are row-major, 0-based.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np


@dataclass(frozen=True)
class LapSpan:
    """One lap of one object: frames ``start..end`` inclusive."""

    obj: int
    start: int
    end: int

    @property
    def length(self) -> int:
        return self.end - self.start + 1


@dataclass
class StreamManifest:
    width: int
    height: int
    channels: int                      # 1 = BW, 3 = RGB
    frame_count: int
    class_names: list[str]             # index 0 is "unknown"
    object_classes: list[int]          # class id of each object
    laps: list[LapSpan] = field(default_factory=list)
    seed: int = 0

    @property
    def object_count(self) -> int:
        return len(self.object_classes)

    @property
    def m(self) -> int:
        """Number of categories including unknown."""
        return len(self.class_names)

    @property
    def pixel_count(self) -> int:
        return self.width * self.height

    def laps_of(self, obj: int) -> list[LapSpan]:
        return [span for span in self.laps if span.obj == obj]

    def lap_at(self, t: int) -> tuple[int, int]:
        """``(object, lap number)`` active at frame *t*; lap numbers are 1-based."""
        counters: dict[int, int] = {}
        for span in self.laps:
            counters[span.obj] = counters.get(span.obj, 0) + 1
            if span.start <= t <= span.end:
                return span.obj, counters[span.obj]
        raise IndexError(f"frame {t} is not covered by any lap")

    def frames_of_laps(self, first: int, last: int, obj: Optional[int] = None) -> list[int]:
        """Frame indices of laps *first..last* (1-based, inclusive)."""
        frames: list[int] = []
        counters: dict[int, int] = {}
        for span in self.laps:
            counters[span.obj] = counters.get(span.obj, 0) + 1
            if first <= counters[span.obj] <= last and (obj is None or span.obj == obj):
                frames.extend(range(span.start, span.end + 1))
        return sorted(frames)

    def laps_per_object(self) -> int:
        if not self.object_classes:
            return 0
        return min(len(self.laps_of(i)) for i in range(self.object_count))


@dataclass(frozen=True)
class Frame:
    """One video frame, pixels ``h × w × c`` in [0, 1]."""

    pixels: np.ndarray
    index: int


@dataclass(frozen=True)
class FlowField:
    """Per-pixel velocity ``h × w × 2`` (x then y), pixels per frame."""

    velocities: np.ndarray

    def magnitude(self) -> np.ndarray:
        v = self.velocities.astype(np.float64)
        return np.sqrt(v[..., 0] ** 2 + v[..., 1] ** 2)


@dataclass(frozen=True)
class SupervisionEvent:
    t: int
    index: int          # raveled row-major pixel index
    class_id: int

    def coords(self, width: int) -> tuple[int, int]:
        """1-based ``(x, y)`` of the supervised pixel."""
        return self.index % width + 1, self.index // width + 1


@dataclass
class StreamBundle:
    """A rendered stream: frames, exact flow, ground-truth masks, supervision.

    Frames are kept as 8-bit arrays (``T × h × w × c``) and exposed as
    floats through :meth:`frame`.
    """

    manifest: StreamManifest
    frames: np.ndarray              # uint8  T,h,w,c
    flows: np.ndarray               # float32 T,h,w,2
    masks: np.ndarray               # uint16 T,h,w
    supervisions: list[SupervisionEvent] = field(default_factory=list)

    def __len__(self) -> int:
        return int(self.frames.shape[0])

    def frame(self, t: int) -> Frame:
        return Frame(pixels=self.frames[t].astype(np.float64) / 255.0, index=t)

    def flow(self, t: int) -> FlowField:
        return FlowField(velocities=self.flows[t])

    def mask(self, t: int) -> np.ndarray:
        return self.masks[t]


@dataclass(frozen=True)
class AttentionState:
    position: tuple[float, float]     # (x, y) in [1, w] × [1, h]
    velocity: tuple[float, float]     # pixels per step
    saccade: bool = False


@dataclass
class EvalRecord:
    """Nearest-template results recorded on the measured lap.

    Decisions are stored before thresholding so ``ξ`` can be changed or
    tuned afterwards.  Trajectory arrays have one entry per eval frame;
    whole-frame arrays are ``N × h × w``.
    """

    frames: np.ndarray                  # int64  N
    foa_x: np.ndarray                   # int64  N, 1-based rounded a_t
    foa_y: np.ndarray
    saccade: np.ndarray                 # bool   N
    traj_truth: np.ndarray              # int64  N
    traj_nearest: np.ndarray            # int64  N
    traj_distance: np.ndarray           # float64 N (inf with no templates)
    frame_truth: np.ndarray             # uint16 N,h,w
    frame_nearest: np.ndarray           # int16  N,h,w
    frame_distance: np.ndarray          # float64 N,h,w

    def __len__(self) -> int:
        return int(self.frames.size)
