"""Binary checkpoints for extractor weights (WGT1) and templates (TPL1).

WGT1::

    b"WGT1" | u32 echo_len | echo (UTF-8 key=value lines) | u32 tensor_count
    then per tensor: u32 ndim | u32 dims… | f64 LE values (row-major)

TPL1::

    b"TPL1" | u32 entry_count
    then per entry: u32 class | u32 frame | u32 x | u32 y | d × f64 LE

The template dimension d is implied by the file size.  The layout has no
staleness field, so entries read back are stale until the store refreshes
them from their source frames.
"""

from __future__ import annotations

import os
import struct

import numpy as np

from memory.template_store import TemplateEntry, TemplateStore
from services.errors import CheckpointError
from services.features import FeatureExtractor
from services.log import log

WEIGHTS_MAGIC = b"WGT1"
TEMPLATES_MAGIC = b"TPL1"
_U32 = struct.Struct("<I")
_ENTRY = struct.Struct("<IIII")


class _Reader:
    def __init__(self, path: str, raw: bytes):
        self.path = path
        self.raw = raw
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.raw):
            raise CheckpointError(self.path, f"truncated at byte {self.pos}")
        chunk = self.raw[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def u32(self) -> int:
        return _U32.unpack(self.take(4))[0]

    def f64(self, count: int) -> np.ndarray:
        return np.frombuffer(self.take(8 * count), dtype="<f8").astype(np.float64)

    def done(self) -> None:
        if self.pos != len(self.raw):
            raise CheckpointError(self.path, f"{len(self.raw) - self.pos} trailing bytes")


def _open(path: str, magic: bytes) -> _Reader:
    try:
        with open(path, "rb") as f:
            raw = f.read()
    except OSError as e:
        raise CheckpointError(path, f"cannot read: {e}") from None
    reader = _Reader(path, raw)
    found = reader.take(4)
    if found != magic:
        raise CheckpointError(path, f"bad magic {found!r}, expected {magic!r}")
    return reader


def _ensure_parent(path: str) -> None:
    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)


# ── Weights ──────────────────────────────────────────────


def save_weights(extractor: FeatureExtractor, path: str) -> str:
    echo = "".join(f"{k}={v}\n" for k, v in extractor.config.echo().items()).encode("utf-8")
    params = extractor.parameters()
    _ensure_parent(path)
    with open(path, "wb") as f:
        f.write(WEIGHTS_MAGIC)
        f.write(_U32.pack(len(echo)))
        f.write(echo)
        f.write(_U32.pack(len(params)))
        for p in params:
            f.write(_U32.pack(p.data.ndim))
            for n in p.shape:
                f.write(_U32.pack(n))
            f.write(np.ascontiguousarray(p.data, dtype="<f8").tobytes())
    log("RUN", f"Saved {len(params)} weight tensors to {path}")
    return path


def read_weights(path: str) -> tuple[dict[str, str], list[np.ndarray]]:
    """Config echo and tensors, in declaration order."""
    r = _open(path, WEIGHTS_MAGIC)
    try:
        text = r.take(r.u32()).decode("utf-8")
    except UnicodeDecodeError:
        raise CheckpointError(path, "config echo is not UTF-8") from None
    echo = dict(line.split("=", 1) for line in text.splitlines() if "=" in line)
    tensors = []
    for _ in range(r.u32()):
        shape = tuple(r.u32() for _ in range(r.u32()))
        tensors.append(r.f64(int(np.prod(shape))).reshape(shape))
    r.done()
    return echo, tensors


def load_weights(extractor: FeatureExtractor, path: str) -> FeatureExtractor:
    echo, tensors = read_weights(path)
    expected = extractor.config.echo()
    if echo != expected:
        diff = sorted(k for k in set(echo) | set(expected) if echo.get(k) != expected.get(k))
        raise CheckpointError(path, f"extractor config differs on: {', '.join(diff)}")
    params = extractor.parameters()
    if len(tensors) != len(params):
        raise CheckpointError(path, f"{len(tensors)} tensors, extractor has {len(params)}")
    for p, data in zip(params, tensors):
        if data.shape != p.shape:
            raise CheckpointError(path, f"tensor {p.name} has shape {data.shape}, expected {p.shape}")
        p.data[...] = data
    return extractor


# ── Templates ────────────────────────────────────────────


def save_templates(store: TemplateStore, path: str) -> str:
    _ensure_parent(path)
    with open(path, "wb") as f:
        f.write(TEMPLATES_MAGIC)
        f.write(_U32.pack(len(store.entries)))
        for e in store.entries:
            f.write(_ENTRY.pack(e.class_id, e.frame, e.x, e.y))
            f.write(np.ascontiguousarray(e.template, dtype="<f8").tobytes())
    log("TPL", f"Saved {len(store.entries)} templates to {path}")
    return path


def read_templates(path: str) -> list[TemplateEntry]:
    r = _open(path, TEMPLATES_MAGIC)
    count = r.u32()
    payload = len(r.raw) - r.pos
    if count == 0:
        d = 0
    elif payload % count or (payload // count - _ENTRY.size) % 8 or payload // count < _ENTRY.size:
        raise CheckpointError(path, f"{payload} payload bytes do not split into {count} entries")
    else:
        d = (payload // count - _ENTRY.size) // 8
    entries = []
    for _ in range(count):
        cls, frame, x, y = _ENTRY.unpack(r.take(_ENTRY.size))
        entries.append(TemplateEntry(template=r.f64(d), class_id=cls, frame=frame, x=x, y=y, stale=True))
    r.done()
    return entries


def load_templates(path: str, store: TemplateStore) -> TemplateStore:
    store.entries = read_templates(path)
    return store
