"""On-disk stream bundle: manifest, PNG frames, motion, masks, supervision.

Layout (per-frame files grouped in subfolders of 100 frames)::

    manifest.txt
    frames/00000100/frame_000123.png
    motion/00000100/motion_000123.mot     MOT1, u32 w, u32 h, f32 vx,vy …
    masks/00000100/mask_000123.msk        MSK1, u32 w, u32 h, u16 class …
    sup/sup.csv                           t,raveled_index,class_id

Frames are 8-bit and flows float32 in memory, so a write/read cycle is
bit-exact.
"""

from __future__ import annotations

import os
import struct
from typing import Iterator

import numpy as np
from PIL import Image

import config
from memory.models import (
    Frame,
    LapSpan,
    StreamBundle,
    StreamManifest,
    SupervisionEvent,
)
from services.errors import BundleFormatError
from services.log import log

MANIFEST_VERSION = 1
MOTION_MAGIC = b"MOT1"
MASK_MAGIC = b"MSK1"
_HEADER = struct.Struct("<4sII")


def _folder(t: int) -> str:
    return f"{(t // config.FRAMES_PER_FOLDER) * config.FRAMES_PER_FOLDER:08d}"


def frame_path(root: str, t: int) -> str:
    return os.path.join(root, "frames", _folder(t), f"frame_{t:06d}.png")


def motion_path(root: str, t: int) -> str:
    return os.path.join(root, "motion", _folder(t), f"motion_{t:06d}.mot")


def mask_path(root: str, t: int) -> str:
    return os.path.join(root, "masks", _folder(t), f"mask_{t:06d}.msk")


# ── Binary records ───────────────────────────────────────


def write_motion(path: str, velocities: np.ndarray) -> None:
    h, w, _ = velocities.shape
    os.makedirs(os.path.dirname(path), exist_ok=True)
    with open(path, "wb") as f:
        f.write(_HEADER.pack(MOTION_MAGIC, w, h))
        f.write(np.ascontiguousarray(velocities, dtype="<f4").tobytes())


def read_motion(path: str) -> np.ndarray:
    w, h, payload = _read_record(path, MOTION_MAGIC, itemsize=8)
    return np.frombuffer(payload, dtype="<f4").reshape(h, w, 2).astype(np.float32)


def write_mask(path: str, mask: np.ndarray) -> None:
    h, w = mask.shape
    os.makedirs(os.path.dirname(path), exist_ok=True)
    with open(path, "wb") as f:
        f.write(_HEADER.pack(MASK_MAGIC, w, h))
        f.write(np.ascontiguousarray(mask, dtype="<u2").tobytes())


def read_mask(path: str) -> np.ndarray:
    w, h, payload = _read_record(path, MASK_MAGIC, itemsize=2)
    return np.frombuffer(payload, dtype="<u2").reshape(h, w).astype(np.uint16)


def _read_record(path: str, magic: bytes, itemsize: int) -> tuple[int, int, bytes]:
    try:
        with open(path, "rb") as f:
            raw = f.read()
    except OSError as e:
        raise BundleFormatError(path, f"cannot read: {e}") from None
    if len(raw) < _HEADER.size:
        raise BundleFormatError(path, "truncated header")
    found, w, h = _HEADER.unpack_from(raw)
    if found != magic:
        raise BundleFormatError(path, f"bad magic {found!r}, expected {magic!r}")
    payload = raw[_HEADER.size:]
    if len(payload) != w * h * itemsize:
        raise BundleFormatError(path, f"truncated payload ({len(payload)} of {w * h * itemsize} bytes)")
    return w, h, payload


# ── Manifest ─────────────────────────────────────────────


def format_manifest(man: StreamManifest) -> str:
    laps = ";".join(f"{s.obj}:{s.start}-{s.end}" for s in man.laps)
    lines = [
        f"version={MANIFEST_VERSION}",
        f"w={man.width}",
        f"h={man.height}",
        f"c={man.channels}",
        f"frames={man.frame_count}",
        f"classes={','.join(man.class_names)}",
        f"objects={','.join(str(c) for c in man.object_classes)}",
        f"seed={man.seed}",
        f"laps={laps}",
    ]
    return "\n".join(lines) + "\n"


def parse_manifest(text: str, path: str = "manifest.txt") -> StreamManifest:
    values: dict[str, str] = {}
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise BundleFormatError(path, f"malformed line {line!r}")
        values[key.strip()] = value.strip()

    missing = [k for k in ("version", "w", "h", "c", "frames", "classes", "objects", "seed", "laps")
               if k not in values]
    if missing:
        raise BundleFormatError(path, f"missing keys: {', '.join(missing)}")
    if values["version"] != str(MANIFEST_VERSION):
        raise BundleFormatError(path, f"unsupported version {values['version']}")

    try:
        laps = []
        for item in filter(None, values["laps"].split(";")):
            obj, _, span = item.partition(":")
            start, _, end = span.partition("-")
            laps.append(LapSpan(obj=int(obj), start=int(start), end=int(end)))
        man = StreamManifest(
            width=int(values["w"]),
            height=int(values["h"]),
            channels=int(values["c"]),
            frame_count=int(values["frames"]),
            class_names=values["classes"].split(","),
            object_classes=[int(c) for c in filter(None, values["objects"].split(","))],
            laps=laps,
            seed=int(values["seed"]),
        )
    except ValueError as e:
        raise BundleFormatError(path, f"bad value: {e}") from None
    _check_manifest(man, path)
    return man


def _check_manifest(man: StreamManifest, path: str) -> None:
    if man.channels not in (1, 3):
        raise BundleFormatError(path, f"channels must be 1 or 3, got {man.channels}")
    if any(c < 1 or c >= man.m for c in man.object_classes):
        raise BundleFormatError(path, "object class outside class list")
    cursor = 0
    for span in sorted(man.laps, key=lambda s: s.start):
        if span.start != cursor or span.end < span.start:
            raise BundleFormatError(path, f"laps do not tile the stream at frame {cursor}")
        if not 0 <= span.obj < man.object_count:
            raise BundleFormatError(path, f"lap refers to unknown object {span.obj}")
        cursor = span.end + 1
    if cursor != man.frame_count:
        raise BundleFormatError(path, f"laps cover {cursor} frames, manifest says {man.frame_count}")


# ── Bundle ───────────────────────────────────────────────


def write_bundle(bundle: StreamBundle, directory: str) -> str:
    """Write *bundle* under *directory*; returns the manifest path."""
    man = bundle.manifest
    os.makedirs(directory, exist_ok=True)
    manifest_file = os.path.join(directory, "manifest.txt")
    with open(manifest_file, "w", encoding="utf-8") as f:
        f.write(format_manifest(man))

    for t in range(len(bundle)):
        path = frame_path(directory, t)
        os.makedirs(os.path.dirname(path), exist_ok=True)
        px = bundle.frames[t]
        img = Image.fromarray(np.ascontiguousarray(px[..., 0] if man.channels == 1 else px, dtype=np.uint8))
        img.save(path, format="PNG")
        write_motion(motion_path(directory, t), bundle.flows[t])
        write_mask(mask_path(directory, t), bundle.masks[t])

    write_supervisions(os.path.join(directory, "sup", "sup.csv"), bundle.supervisions)
    log("STREAM", f"Wrote bundle with {len(bundle)} frames to {directory}")
    return manifest_file


def write_supervisions(path: str, events: list[SupervisionEvent]) -> None:
    os.makedirs(os.path.dirname(path), exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        for e in events:
            f.write(f"{e.t},{e.index},{e.class_id}\n")


def read_supervisions(path: str, man: StreamManifest) -> list[SupervisionEvent]:
    events: list[SupervisionEvent] = []
    if not os.path.exists(path):
        return events
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            try:
                t, index, cls = (int(p) for p in parts)
            except ValueError:
                raise BundleFormatError(path, f"line {lineno}: malformed supervision {line!r}") from None
            if not 0 <= index < man.pixel_count:
                raise BundleFormatError(path, f"line {lineno}: pixel index {index} outside {man.pixel_count}")
            if not 0 <= t < man.frame_count:
                raise BundleFormatError(path, f"line {lineno}: frame {t} outside stream")
            if not 1 <= cls < man.m:
                raise BundleFormatError(path, f"line {lineno}: class id {cls} invalid")
            events.append(SupervisionEvent(t=t, index=index, class_id=cls))
    return events


def read_bundle(directory: str, force_gray: bool = False) -> StreamBundle:
    """Load a bundle written by :func:`write_bundle`.

    With *force_gray* RGB frames are converted to one-channel luminance.
    """
    manifest_file = os.path.join(directory, "manifest.txt")
    try:
        with open(manifest_file, "r", encoding="utf-8") as f:
            man = parse_manifest(f.read(), manifest_file)
    except OSError as e:
        raise BundleFormatError(manifest_file, f"cannot read: {e}") from None

    T, w, h, c = man.frame_count, man.width, man.height, man.channels
    frames = np.zeros((T, h, w, c), dtype=np.uint8)
    flows = np.zeros((T, h, w, 2), dtype=np.float32)
    masks = np.zeros((T, h, w), dtype=np.uint16)

    for t in range(T):
        path = frame_path(directory, t)
        try:
            with Image.open(path) as img:
                px = np.asarray(img)
        except OSError as e:
            raise BundleFormatError(path, f"cannot read frame: {e}") from None
        if px.ndim == 2:
            px = px[..., None]
        if px.shape != (h, w, c):
            raise BundleFormatError(path, f"frame shape {px.shape} does not match manifest {(h, w, c)}")
        frames[t] = px

        for reader, store, name in ((read_motion, flows, motion_path), (read_mask, masks, mask_path)):
            rec_path = name(directory, t)
            arr = reader(rec_path)
            if arr.shape[:2] != (h, w):
                raise BundleFormatError(rec_path, f"size {arr.shape[1]}x{arr.shape[0]} does not match manifest")
            store[t] = arr

    if masks.size and int(masks.max()) >= man.m:
        raise BundleFormatError(directory, "mask class id outside class list")
    supervisions = read_supervisions(os.path.join(directory, "sup", "sup.csv"), man)
    bundle = StreamBundle(manifest=man, frames=frames, flows=flows, masks=masks,
                          supervisions=supervisions)
    if force_gray and c == 3:
        bundle = to_gray(bundle)
    log("STREAM", f"Read bundle {directory}: {T} frames, {len(supervisions)} supervisions")
    return bundle


def to_gray(bundle: StreamBundle) -> StreamBundle:
    rgb = bundle.frames.astype(np.float64)
    lum = 0.299 * rgb[..., 0] + 0.587 * rgb[..., 1] + 0.114 * rgb[..., 2]
    gray = np.round(lum).astype(np.uint8)[..., None]
    man = bundle.manifest
    gray_man = StreamManifest(
        width=man.width, height=man.height, channels=1, frame_count=man.frame_count,
        class_names=list(man.class_names), object_classes=list(man.object_classes),
        laps=list(man.laps), seed=man.seed,
    )
    return StreamBundle(manifest=gray_man, frames=gray, flows=bundle.flows,
                        masks=bundle.masks, supervisions=list(bundle.supervisions))


def iter_frames(bundle: StreamBundle, repetitions: int = 1) -> Iterator[Frame]:
    """Replay the stream *repetitions* times; frame indices keep counting."""
    n = len(bundle)
    for rep in range(repetitions):
        for t in range(n):
            frame = bundle.frame(t)
            yield Frame(pixels=frame.pixels, index=rep * n + t)
