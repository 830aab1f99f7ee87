"""Per-pixel feature extractor ``f(V_t, ω)``.

A fully-convolutional stack (stride 1, size-preserving zero padding)
turns an ``h × w × c`` frame into an ``h × w × d`` map.  Hidden layers are
followed by the configured activation, the last layer is linear, and an
optional row normalization puts every pixel vector on the unit sphere.

The ``baseline`` kind has no weights: features are the raw pixel values.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

import config
from memory.models import Frame
from services.errors import ShapeError
from services.gradcore import (
    Tensor,
    conv2d,
    l2norm_rows,
    relu,
    reshape,
    tanh,
    tensor,
    transpose,
)

EXTRACTOR_KINDS = ("fcn", "baseline")
ACTIVATIONS = {"tanh": tanh, "relu": relu}


def parse_channels(text: str) -> tuple[int, ...]:
    return tuple(int(p) for p in text.split(",") if p.strip())


@dataclass(frozen=True)
class ExtractorConfig:
    in_channels: int = 3
    kind: str = config.EXTRACTOR_KIND
    kernel: int = config.KERNEL_SIZE
    hidden: tuple[int, ...] = field(default_factory=lambda: parse_channels(config.HIDDEN_CHANNELS))
    out_dim: int = config.FEATURE_DIM
    activation: str = config.ACTIVATION
    normalize: bool = config.NORMALIZE_FEATURES
    seed: int = config.INIT_SEED

    @property
    def layers(self) -> int:
        return len(self.hidden) + 1

    @property
    def d(self) -> int:
        return self.in_channels if self.kind == "baseline" else self.out_dim

    def problems(self) -> list[str]:
        out = []
        if self.kind not in EXTRACTOR_KINDS:
            out.append(f"extractor kind must be one of {', '.join(EXTRACTOR_KINDS)}")
        if self.in_channels < 1:
            out.append("in_channels must be >= 1")
        if self.kernel < 1 or self.kernel % 2 == 0:
            out.append("kernel must be a positive odd integer")
        if any(c < 1 for c in self.hidden):
            out.append("hidden channels must be positive")
        if self.out_dim < 1:
            out.append("feature dim must be >= 1")
        if self.activation not in ACTIVATIONS:
            out.append(f"activation must be one of {', '.join(ACTIVATIONS)}")
        return out

    def echo(self) -> dict[str, str]:
        return {
            "kind": self.kind,
            "in_channels": str(self.in_channels),
            "kernel": str(self.kernel),
            "hidden": ",".join(str(c) for c in self.hidden),
            "out_dim": str(self.out_dim),
            "activation": self.activation,
            "normalize": str(self.normalize).lower(),
            "seed": str(self.seed),
        }


@dataclass
class FeatureMap:
    """Features of one frame as an ``(h·w) × d`` row tensor, row-major pixels."""

    rows: Tensor
    height: int
    width: int
    index: int = -1
    version: int = 0

    @property
    def d(self) -> int:
        return int(self.rows.shape[1])

    def values(self) -> np.ndarray:
        return self.rows.data.reshape(self.height, self.width, self.d).copy()

    def row_index(self, x: Sequence[int]) -> int:
        cx, cy = int(x[0]), int(x[1])
        if not (1 <= cx <= self.width and 1 <= cy <= self.height):
            raise ShapeError("restrict", [(self.height, self.width)], f"coordinate ({cx}, {cy}) outside 1-based frame")
        return (cy - 1) * self.width + (cx - 1)

    def restrict(self, x: Sequence[int]) -> np.ndarray:
        """Copy of the feature vector at 1-based ``x = (col, row)``."""
        return self.rows.data[self.row_index(x)].copy()


def restrict(fmap: FeatureMap, x: Sequence[int]) -> np.ndarray:
    return fmap.restrict(x)


class FeatureExtractor:
    """Weights ``ω`` plus the forward pass.

    ``version`` counts weight updates so feature maps can tell which
    weights produced them.
    """

    def __init__(self, cfg: ExtractorConfig):
        problems = cfg.problems()
        if problems:
            raise ValueError("; ".join(problems))
        self.config = cfg
        self.version = 0
        self.weights: list[Tensor] = []
        self.biases: list[Tensor] = []
        if cfg.kind == "fcn":
            self._init_weights()

    def _init_weights(self) -> None:
        cfg = self.config
        rng = np.random.default_rng(cfg.seed)
        channels = [cfg.in_channels, *cfg.hidden, cfg.out_dim]
        for i, (cin, cout) in enumerate(zip(channels[:-1], channels[1:])):
            bound = np.sqrt(1.0 / (cin * cfg.kernel * cfg.kernel))
            w = rng.uniform(-bound, bound, size=(cout, cin, cfg.kernel, cfg.kernel))
            b = rng.uniform(-bound, bound, size=(cout,))
            self.weights.append(tensor(w, requires_grad=True, name=f"conv{i}.weight"))
            self.biases.append(tensor(b, requires_grad=True, name=f"conv{i}.bias"))

    def parameters(self) -> list[Tensor]:
        """Trainable tensors in declaration order (weight, bias per layer)."""
        params: list[Tensor] = []
        for w, b in zip(self.weights, self.biases):
            params.extend((w, b))
        return params

    @property
    def trainable(self) -> bool:
        return bool(self.weights)

    def forward(self, frame: Frame | np.ndarray) -> FeatureMap:
        pixels = frame.pixels if isinstance(frame, Frame) else np.asarray(frame, dtype=np.float64)
        index = frame.index if isinstance(frame, Frame) else -1
        if pixels.ndim != 3 or pixels.shape[2] != self.config.in_channels:
            raise ShapeError("forward", [pixels.shape], f"expected h x w x {self.config.in_channels}")
        h, w, c = pixels.shape

        if self.config.kind == "baseline":
            rows = tensor(pixels.reshape(h * w, c))
        else:
            act = ACTIVATIONS[self.config.activation]
            x = tensor(pixels.transpose(2, 0, 1))
            last = len(self.weights) - 1
            for i, (weight, bias) in enumerate(zip(self.weights, self.biases)):
                x = conv2d(x, weight, bias)
                if i < last:
                    x = act(x)
            rows = transpose(reshape(x, (self.config.out_dim, h * w)))
        if self.config.normalize:
            rows = l2norm_rows(rows)
        return FeatureMap(rows=rows, height=h, width=w, index=index, version=self.version)

    def features_at(self, frame: Frame, coords: Sequence[tuple[int, int]]) -> list[np.ndarray]:
        """Vectors at several 1-based coords of one frame, no gradient."""
        fmap = self.forward(frame)
        return [fmap.restrict(xy) for xy in coords]


def forward(frame: Frame, extractor: FeatureExtractor) -> FeatureMap:
    return extractor.forward(frame)
