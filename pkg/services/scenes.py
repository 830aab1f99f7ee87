"""Synthetic scene rendering with exact rigid-motion optical flow.

Objects move one at a time along closed paths while rotating and
scaling; a lap brings each object back to its start pose.  Round ``r`` of
the stream holds lap ``r`` of every object in declaration order and only
the active object is drawn.  Flow comes from the analytic pose
derivatives, so it is exact on the object mask and zero elsewhere.

The module also places the scripted supervisions along an attention
trajectory (first eligible frame, minimum spacing, centroid fallback).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

import config
from memory.models import (
    AttentionState,
    Frame,
    LapSpan,
    StreamBundle,
    StreamManifest,
    SupervisionEvent,
)
from services.errors import StreamError
from services.log import debug, log

# ── Palette ──────────────────────────────────────────────

COLORS: dict[str, tuple[float, float, float]] = {
    "black": (0.0, 0.0, 0.0),
    "white": (1.0, 1.0, 1.0),
    "gray": (0.5, 0.5, 0.5),
    "dark": (0.2, 0.2, 0.2),
    "red": (0.9, 0.1, 0.1),
    "green": (0.1, 0.8, 0.2),
    "blue": (0.1, 0.2, 0.9),
    "yellow": (0.95, 0.85, 0.1),
    "magenta": (0.85, 0.1, 0.8),
    "cyan": (0.1, 0.8, 0.85),
}

SHAPES = ("rectangle", "triangle", "circle")
PATHS = ("ellipse", "line", "static")
RECT_ASPECT = 0.6            # half-height / half-width
CHECKER_CELL = 8             # px


# ── Scene description ────────────────────────────────────


@dataclass
class ObjectSpec:
    shape: str                           # rectangle | triangle | circle
    class_id: int
    size: float                          # half-width / circumradius in px
    color: str = "red"
    texture: bool = False                # body-attached stripes
    path: str = "ellipse"                # ellipse | line | static
    center: tuple[float, float] = (32.5, 32.5)
    radius: tuple[float, float] = (10.0, 6.0)
    rotation_rate: float = 0.0           # rad/frame; rate·lap_frames ≡ 0 mod 2π
    scale_rate: float = 0.0              # peak relative scale change per frame
    lap_frames: int = 40


@dataclass
class SceneSpec:
    width: int = 64
    height: int = 64
    channels: int = 3
    background: str = "uniform"          # uniform | checker
    background_color: str = "dark"
    objects: list[ObjectSpec] = field(default_factory=list)
    laps_total: int = 31
    class_names: list[str] = field(default_factory=lambda: ["unknown"])


def spin_rate(spins: int, lap_frames: int) -> float:
    """Rotation rate giving *spins* full turns per lap."""
    return 2.0 * math.pi * spins / lap_frames


@dataclass(frozen=True)
class Pose:
    center: tuple[float, float]
    angle: float
    scale: float
    velocity: tuple[float, float]        # d center / d frame
    angular_rate: float                  # d angle / d frame
    scale_rate: float                    # d scale / d frame


def object_pose(obj: ObjectSpec, k: int, phase: float = 0.0) -> Pose:
    """Pose of *obj* at local frame *k* of its lap."""
    L = obj.lap_frames
    w = 2.0 * math.pi / L
    tau = w * k
    cx, cy = obj.center
    rx, ry = obj.radius
    if obj.path == "ellipse":
        center = (cx + rx * math.sin(tau), cy - ry * math.cos(tau))
        vel = (rx * w * math.cos(tau), ry * w * math.sin(tau))
    elif obj.path == "line":
        center = (cx + rx * math.sin(tau), cy + ry * math.sin(tau))
        vel = (rx * w * math.cos(tau), ry * w * math.cos(tau))
    else:
        center, vel = (cx, cy), (0.0, 0.0)
    amp = obj.scale_rate / w
    scale = 1.0 + amp * math.sin(tau)
    return Pose(
        center=center,
        angle=phase + obj.rotation_rate * k,
        scale=scale,
        velocity=vel,
        angular_rate=obj.rotation_rate,
        scale_rate=obj.scale_rate * math.cos(tau),
    )


def _circumradius(obj: ObjectSpec) -> float:
    if obj.shape == "rectangle":
        return obj.size * math.sqrt(1.0 + RECT_ASPECT ** 2)
    return obj.size


def _validate(scene: SceneSpec) -> None:
    for i, obj in enumerate(scene.objects):
        if obj.shape not in SHAPES:
            raise StreamError(f"unknown shape {obj.shape!r}", obj=i)
        if obj.path not in PATHS:
            raise StreamError(f"unknown path {obj.path!r}", obj=i)
        if obj.lap_frames < 1:
            raise StreamError("lap_frames must be >= 1", obj=i)
        if obj.class_id < 1 or obj.class_id >= len(scene.class_names):
            raise StreamError(f"class id {obj.class_id} outside class_names", obj=i)
        turns = obj.rotation_rate * obj.lap_frames / (2.0 * math.pi)
        if abs(turns - round(turns)) > 1e-9:
            raise StreamError("rotation does not return to the start pose at lap end", obj=i)
        if abs(obj.scale_rate) * obj.lap_frames / (2.0 * math.pi) >= 1.0:
            raise StreamError("scale oscillation would collapse the object", obj=i)
        if obj.color not in COLORS:
            raise StreamError(f"unknown color {obj.color!r}", obj=i)


# ── Rendering ────────────────────────────────────────────


def _inside(shape: str, size: float, qx: np.ndarray, qy: np.ndarray) -> np.ndarray:
    if shape == "circle":
        return qx * qx + qy * qy <= size * size
    if shape == "rectangle":
        return (np.abs(qx) <= size) & (np.abs(qy) <= size * RECT_ASPECT)
    inside = np.ones_like(qx, dtype=bool)
    for deg in (90.0, 210.0, 330.0):
        a = math.radians(deg)
        inside &= qx * math.cos(a) + qy * math.sin(a) <= size / 2.0
    return inside


def _background(scene: SceneSpec, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    base = np.array(COLORS[scene.background_color], dtype=np.float64)
    img = np.broadcast_to(base, (scene.height, scene.width, 3)).copy()
    if scene.background == "checker":
        cells = ((xs - 1) // CHECKER_CELL + (ys - 1) // CHECKER_CELL) % 2 == 1
        img[cells] = np.clip(base + 0.25, 0.0, 1.0)
    return img


def _render(
    scene: SceneSpec, obj: ObjectSpec, pose: Pose, xs: np.ndarray, ys: np.ndarray,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return ``(rgb, mask, flow)`` for one active object."""
    cx, cy = pose.center
    rx, ry = xs - cx, ys - cy
    cos_a, sin_a = math.cos(pose.angle), math.sin(pose.angle)
    qx = (cos_a * rx + sin_a * ry) / pose.scale
    qy = (-sin_a * rx + cos_a * ry) / pose.scale
    mask = _inside(obj.shape, obj.size, qx, qy)

    img = _background(scene, xs, ys)
    color = np.array(COLORS[obj.color], dtype=np.float64)
    if obj.texture:
        stripes = np.where(np.sin(qx * math.pi / 2.0) > 0, 1.0, 0.55)
        shade = stripes[..., None] * color
    else:
        shade = np.broadcast_to(color, img.shape)
    img[mask] = shade[mask]

    flow = np.zeros((scene.height, scene.width, 2), dtype=np.float64)
    growth = pose.scale_rate / pose.scale
    vx = pose.velocity[0] + growth * rx - pose.angular_rate * ry
    vy = pose.velocity[1] + growth * ry + pose.angular_rate * rx
    flow[..., 0] = np.where(mask, vx, 0.0)
    flow[..., 1] = np.where(mask, vy, 0.0)
    return img, mask, flow


def lap_schedule(scene: SceneSpec) -> list[LapSpan]:
    laps: list[LapSpan] = []
    t = 0
    for _ in range(scene.laps_total):
        for i, obj in enumerate(scene.objects):
            laps.append(LapSpan(obj=i, start=t, end=t + obj.lap_frames - 1))
            t += obj.lap_frames
    return laps


def generate_stream(scene: SceneSpec, seed: int) -> StreamBundle:
    """Render the whole stream described by *scene*; deterministic in *seed*."""
    _validate(scene)
    rng = np.random.default_rng(seed)
    phases = [float(rng.uniform(0.0, 2.0 * math.pi)) if o.rotation_rate else 0.0
              for o in scene.objects]

    w, h = scene.width, scene.height
    ys, xs = np.mgrid[1:h + 1, 1:w + 1].astype(np.float64)

    # every pose of a lap must fit before anything is rendered
    laps = lap_schedule(scene)
    for i, obj in enumerate(scene.objects):
        first = next(span for span in laps if span.obj == i)
        for k in range(obj.lap_frames):
            pose = object_pose(obj, k, phases[i])
            r = _circumradius(obj) * pose.scale
            cx, cy = pose.center
            if cx - r < 0.5 or cx + r > w + 0.5 or cy - r < 0.5 or cy + r > h + 0.5:
                raise StreamError(
                    f"object leaves the frame (center=({cx:.2f},{cy:.2f}), radius={r:.2f})",
                    frame=first.start + k, obj=i,
                )

    total = laps[-1].end + 1 if laps else 0
    frames = np.zeros((total, h, w, scene.channels), dtype=np.uint8)
    flows = np.zeros((total, h, w, 2), dtype=np.float32)
    masks = np.zeros((total, h, w), dtype=np.uint16)

    # rendering is periodic per object: draw one lap, then tile it
    for i, obj in enumerate(scene.objects):
        lap_frames, lap_flows, lap_masks = [], [], []
        for k in range(obj.lap_frames):
            img, mask, flow = _render(scene, obj, object_pose(obj, k, phases[i]), xs, ys)
            lap_frames.append(_quantize(img, scene.channels))
            lap_flows.append(flow.astype(np.float32))
            lap_masks.append(np.where(mask, obj.class_id, 0).astype(np.uint16))
        for span in laps:
            if span.obj != i:
                continue
            frames[span.start:span.end + 1] = lap_frames
            flows[span.start:span.end + 1] = lap_flows
            masks[span.start:span.end + 1] = lap_masks

    manifest = StreamManifest(
        width=w,
        height=h,
        channels=scene.channels,
        frame_count=total,
        class_names=list(scene.class_names),
        object_classes=[o.class_id for o in scene.objects],
        laps=laps,
        seed=seed,
    )
    log("STREAM", f"Generated {total} frames ({w}x{h}x{scene.channels}), "
                  f"{len(scene.objects)} objects, {scene.laps_total} laps, seed={seed}")
    return StreamBundle(manifest=manifest, frames=frames, flows=flows, masks=masks)


def _quantize(rgb: np.ndarray, channels: int) -> np.ndarray:
    if channels == 1:
        rgb = luminance(rgb)[..., None]
    return np.round(np.clip(rgb, 0.0, 1.0) * 255.0).astype(np.uint8)


def luminance(rgb: np.ndarray) -> np.ndarray:
    return 0.299 * rgb[..., 0] + 0.587 * rgb[..., 1] + 0.114 * rgb[..., 2]


def brightness(frame: Frame) -> np.ndarray:
    """Scalar ``h × w`` brightness: luminance for RGB, identity for BW."""
    px = frame.pixels
    if px.shape[-1] == 3:
        return luminance(px)
    return px[..., 0].astype(np.float64)


# ── Presets ──────────────────────────────────────────────


def preset(
    name: str,
    laps: Optional[int] = None,
    size: Optional[int] = None,
    lap_frames: Optional[int] = None,
) -> SceneSpec:
    """Named scenes: empty-2, empty-4, solid-3, checker-2, static-1."""
    laps = laps if laps is not None else config.STREAM_LAPS
    side = size if size is not None else config.STREAM_WIDTH
    L = lap_frames if lap_frames is not None else config.LAP_FRAMES
    mid = (side + 1) / 2.0
    unit = side / 64.0

    def obj(shape, cid, color, spins=1, texture=False, path="ellipse", scale=0.0):
        return ObjectSpec(
            shape=shape, class_id=cid, size=7.0 * unit, color=color, texture=texture,
            path=path, center=(mid, mid), radius=(12.0 * unit, 8.0 * unit),
            rotation_rate=spin_rate(spins, L), scale_rate=scale, lap_frames=L,
        )

    if name == "empty-2":
        objects = [obj("rectangle", 1, "red"), obj("triangle", 2, "green", spins=-1)]
        return SceneSpec(side, side, 3, "uniform", "dark", objects, laps,
                         ["unknown", "rectangle", "triangle"])
    if name == "empty-4":
        objects = [
            obj("rectangle", 1, "red"),
            obj("triangle", 2, "green", spins=-1),
            obj("circle", 3, "blue", spins=0, scale=0.01),
            obj("rectangle", 4, "yellow", spins=2, path="line"),
        ]
        return SceneSpec(side, side, 3, "uniform", "dark", objects, laps,
                         ["unknown", "red-box", "triangle", "disc", "yellow-box"])
    if name == "solid-3":
        objects = [
            obj("rectangle", 1, "white"),
            obj("circle", 2, "white", spins=0, scale=0.01),
            obj("triangle", 3, "white", spins=-1),
        ]
        return SceneSpec(side, side, 1, "uniform", "gray", objects, laps,
                         ["unknown", "cube", "sphere", "pyramid"])
    if name == "checker-2":
        objects = [obj("rectangle", 1, "red", texture=True),
                   obj("circle", 2, "cyan", spins=1, texture=True)]
        return SceneSpec(side, side, 3, "checker", "gray", objects, laps,
                         ["unknown", "box", "disc"])
    if name == "static-1":
        objects = [obj("rectangle", 1, "red", spins=0, path="static")]
        return SceneSpec(side, side, 3, "uniform", "dark", objects, laps,
                         ["unknown", "box"])
    raise StreamError(f"unknown scene preset {name!r}")


PRESETS = ("empty-2", "empty-4", "solid-3", "checker-2", "static-1")


# ── Supervision placement ────────────────────────────────


@dataclass
class SupervisionPlan:
    events: list[SupervisionEvent]
    fallbacks: list[dict]            # {"object", "t", "reason"}
    boundary_skips: int = 0


def _round(v: float) -> int:
    return int(math.floor(v + 0.5))


def plan_supervisions(
    bundle: StreamBundle,
    trajectory: Sequence[AttentionState],
    first_lap: int,
    last_lap: int,
    per_object: int,
    min_spacing: int,
) -> SupervisionPlan:
    """Place *per_object* supervisions per object inside laps first..last.

    A frame is eligible when the rounded attention point lies on the
    object; frames closer than *min_spacing* to the previous supervision
    of the same object are skipped.  Objects the attention never lands on
    get centroid supervisions, recorded as fallbacks.
    """
    man = bundle.manifest
    w, h = man.width, man.height
    events: list[SupervisionEvent] = []
    fallbacks: list[dict] = []
    ties = 0

    for obj, cls in enumerate(man.object_classes):
        window = man.frames_of_laps(first_lap, last_lap, obj=obj)
        chosen: list[int] = []
        next_allowed = -1
        for t in window:
            if len(chosen) == per_object:
                break
            if t < next_allowed:
                continue
            ax, ay = trajectory[t].position
            px, py = min(max(_round(ax), 1), w), min(max(_round(ay), 1), h)
            mask = bundle.mask(t)
            if mask[py - 1, px - 1] != cls:
                continue
            if _boundary_tie(mask, ax, ay, w, h):
                ties += 1
                debug("STREAM", f"Boundary tie for object {obj} at frame {t}; skipping")
                continue
            events.append(SupervisionEvent(t=t, index=(py - 1) * w + (px - 1), class_id=cls))
            chosen.append(t)
            next_allowed = t + min_spacing

        for t in window:
            if len(chosen) == per_object:
                break
            if t < next_allowed:
                continue
            ys, xs = np.nonzero(bundle.mask(t) == cls)
            if xs.size == 0:
                continue
            cx, cy = xs.mean(), ys.mean()
            nearest = int(np.argmin((xs - cx) ** 2 + (ys - cy) ** 2))
            events.append(SupervisionEvent(t=t, index=int(ys[nearest]) * w + int(xs[nearest]),
                                           class_id=cls))
            fallbacks.append({"object": obj, "t": t, "reason": "attention never on object"})
            log("WARNING", f"Supervision fallback to centroid for object {obj} at frame {t}")
            chosen.append(t)
            next_allowed = t + min_spacing

        if len(chosen) < per_object:
            log("WARNING", f"Only {len(chosen)}/{per_object} supervisions fit for object {obj} "
                           f"in laps {first_lap}-{last_lap}")

    events.sort(key=lambda e: (e.t, e.index))
    return SupervisionPlan(events=events, fallbacks=fallbacks, boundary_skips=ties)


def _boundary_tie(mask: np.ndarray, ax: float, ay: float, w: int, h: int) -> bool:
    """True when a coordinate sits exactly between two pixels of differing class."""
    for value, horizontal in ((ax, True), (ay, False)):
        if value - math.floor(value) != 0.5:
            continue
        lo, hi = int(math.floor(value)), int(math.floor(value)) + 1
        other = _round(ay if horizontal else ax)
        limit = w if horizontal else h
        if lo < 1 or hi > limit:
            continue
        if horizontal:
            a, b = mask[other - 1, lo - 1], mask[other - 1, hi - 1]
        else:
            a, b = mask[lo - 1, other - 1], mask[hi - 1, other - 1]
        if a != b:
            return True
    return False
