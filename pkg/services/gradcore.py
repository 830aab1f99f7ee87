"""Dense f64 tensors with reverse-mode differentiation on an explicit tape.

Operations are plain functions over :class:`Tensor`.  While a
:class:`Tape` is active (``with Tape() as tape:``) every operation that
touches a tensor with ``requires_grad`` is recorded; ``tape.backward``
then walks the records in reverse and returns a gradient map.  Outside a
tape operations simply compute values, which is what the finite-difference
checker relies on.

Every operation output is checked for NaN/Inf and raises
:class:`NonFiniteError` immediately.

Usage::

    w = tensor([1.0, 2.0], requires_grad=True)
    with Tape() as tape:
        loss = sum_(square(w))
    grads = tape.backward(loss, [w])      # {w: array([2., 4.])}
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from typing import Callable, Iterable, Optional, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from services.errors import NonFiniteError, ShapeError, TapeError


# ── Tensor ───────────────────────────────────────────────


class Tensor:
    """Row-major f64 array plus a ``requires_grad`` flag.

    Identity-hashed, so tensors can key gradient maps.
    """

    __slots__ = ("data", "requires_grad", "name", "__weakref__")

    def __init__(self, data, requires_grad: bool = False, name: str = ""):
        self.data = np.array(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return int(self.data.size)

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def __repr__(self) -> str:
        label = f" {self.name}" if self.name else ""
        return f"<Tensor{label} shape={self.shape} grad={self.requires_grad}>"

    # Operator sugar; each maps onto a recorded op.
    def __add__(self, other): return add(self, other)
    def __radd__(self, other): return add(other, self)
    def __sub__(self, other): return sub(self, other)
    def __rsub__(self, other): return sub(other, self)
    def __mul__(self, other): return mul(self, other)
    def __rmul__(self, other): return mul(other, self)
    def __matmul__(self, other): return matmul(self, other)
    def __neg__(self): return mul(self, -1.0)


def tensor(data, requires_grad: bool = False, name: str = "") -> Tensor:
    return Tensor(data, requires_grad=requires_grad, name=name)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


# ── Tape ─────────────────────────────────────────────────


@dataclass
class Record:
    op: str
    inputs: tuple[Tensor, ...]
    output: Tensor
    grad_fn: Callable[[np.ndarray], tuple[Optional[np.ndarray], ...]]


_local = threading.local()


def _stack() -> list["Tape"]:
    if not hasattr(_local, "tapes"):
        _local.tapes = []
    return _local.tapes


def active_tape() -> Optional[Tape]:
    stack = _stack()
    return stack[-1] if stack else None


class Tape:
    """Ordered operation records for one forward pass.

    A tape belongs to the thread that entered it and supports exactly one
    ``backward`` call.
    """

    def __init__(self):
        self.records: list[Record] = []
        self.consumed = False
        self._outputs: set[int] = set()

    def __enter__(self) -> "Tape":
        if self.consumed:
            raise TapeError("tape already consumed by a backward pass")
        _stack().append(self)
        return self

    def __exit__(self, *exc) -> None:
        stack = _stack()
        if stack and stack[-1] is self:
            stack.pop()

    def __len__(self) -> int:
        return len(self.records)

    def record(self, rec: Record) -> None:
        if self.consumed:
            raise TapeError("cannot record on a consumed tape")
        self.records.append(rec)
        self._outputs.add(id(rec.output))

    def backward(
        self,
        loss: Tensor,
        wrt: Optional[Iterable[Tensor]] = None,
    ) -> dict[Tensor, np.ndarray]:
        """Reverse pass from scalar *loss*.

        Returns a gradient for every tensor in *wrt* (every leaf with
        ``requires_grad`` when omitted); leaves the loss does not reach
        get a zero gradient.
        """
        if self.consumed:
            raise TapeError("tape already consumed by a backward pass")
        if loss.size != 1:
            raise TapeError(f"backward needs a scalar loss, got shape {loss.shape}")
        if id(loss) not in self._outputs:
            raise TapeError("loss was not produced through this tape")
        self.consumed = True

        grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
        for rec in reversed(self.records):
            g_out = grads.pop(id(rec.output), None)
            if g_out is None:
                continue
            in_grads = rec.grad_fn(g_out)
            for t, g in zip(rec.inputs, in_grads):
                if g is None or not t.requires_grad:
                    continue
                key = id(t)
                if key in grads:
                    grads[key] = grads[key] + g
                else:
                    grads[key] = g

        if wrt is None:
            wrt = self.leaves()
        return {
            p: grads.get(id(p), np.zeros_like(p.data)).reshape(p.shape)
            for p in wrt
        }

    def leaves(self) -> list[Tensor]:
        seen: dict[int, Tensor] = {}
        for rec in self.records:
            for t in rec.inputs:
                if t.requires_grad and id(t) not in self._outputs:
                    seen.setdefault(id(t), t)
        return list(seen.values())


def backward(loss: Tensor, wrt: Optional[Iterable[Tensor]] = None, tape: Optional[Tape] = None):
    """Run ``backward`` on *tape* (default: the innermost active tape)."""
    tape = tape or active_tape()
    if tape is None:
        raise TapeError("no tape recorded this loss")
    return tape.backward(loss, wrt)


def _emit(op: str, inputs: Sequence[Tensor], out: np.ndarray, grad_fn) -> Tensor:
    if not np.all(np.isfinite(out)):
        raise NonFiniteError(op, f"output shape {np.shape(out)}")
    needs = any(t.requires_grad for t in inputs)
    tape = active_tape() if needs else None
    result = Tensor(out, requires_grad=tape is not None)
    if tape is not None:
        tape.record(Record(op, tuple(inputs), result, grad_fn))
    return result


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _broadcast_shape(op: str, a: Tensor, b: Tensor) -> tuple[int, ...]:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(op, [a.shape, b.shape]) from None


# ── Elementwise ──────────────────────────────────────────


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _broadcast_shape("add", a, b)
    return _emit(
        "add", (a, b), a.data + b.data,
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
    )


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _broadcast_shape("sub", a, b)
    return _emit(
        "sub", (a, b), a.data - b.data,
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)),
    )


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _broadcast_shape("mul", a, b)
    return _emit(
        "mul", (a, b), a.data * b.data,
        lambda g: (
            _unbroadcast(g * b.data, a.shape),
            _unbroadcast(g * a.data, b.shape),
        ),
    )


def relu(x) -> Tensor:
    x = _as_tensor(x)
    mask = x.data > 0
    return _emit("relu", (x,), np.where(mask, x.data, 0.0), lambda g: (g * mask,))


def tanh(x) -> Tensor:
    x = _as_tensor(x)
    y = np.tanh(x.data)
    return _emit("tanh", (x,), y, lambda g: (g * (1.0 - y * y),))


def square(x) -> Tensor:
    x = _as_tensor(x)
    return _emit("square", (x,), x.data * x.data, lambda g: (2.0 * x.data * g,))


def reciprocal(x) -> Tensor:
    x = _as_tensor(x)
    with np.errstate(divide="ignore"):
        y = 1.0 / x.data
    return _emit("reciprocal", (x,), y, lambda g: (-g * y * y,))


# ── Reductions and products ──────────────────────────────


def sum_(x, axis: Optional[int] = None) -> Tensor:
    x = _as_tensor(x)
    out = x.data.sum(axis=axis)

    def grad_fn(g):
        if axis is None:
            return (np.broadcast_to(g, x.shape).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis), x.shape).copy(),)

    return _emit("sum", (x,), out, grad_fn)


def dot(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.ndim != 1 or a.shape != b.shape:
        raise ShapeError("dot", [a.shape, b.shape], "expects two equal-length vectors")
    return _emit("dot", (a, b), np.dot(a.data, b.data), lambda g: (g * b.data, g * a.data))


def matmul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError("matmul", [a.shape, b.shape])
    return _emit(
        "matmul", (a, b), a.data @ b.data,
        lambda g: (g @ b.data.T, a.data.T @ g),
    )


PAIR_BLOCK_ELEMENTS = 1 << 22


def _row_blocks(n: int, m: int, d: int) -> Iterable[slice]:
    step = max(1, PAIR_BLOCK_ELEMENTS // max(1, m * d))
    for lo in range(0, n, step):
        yield slice(lo, min(n, lo + step))


def pair_sq_dist(a, b) -> Tensor:
    """``(n × m)`` matrix of ``‖a_i − b_j‖²`` from explicit row differences.

    Equal rows give exactly zero.  Forward and backward both cost
    ``O(n·m·d)`` and run over row blocks of at most
    ``PAIR_BLOCK_ELEMENTS`` differences.
    """
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[1]:
        raise ShapeError("pair_sq_dist", [a.shape, b.shape], "expects two matrices with equal row width")
    n, m, d = a.shape[0], b.shape[0], a.shape[1]
    out = np.empty((n, m))
    for rows in _row_blocks(n, m, d):
        diff = a.data[rows, None, :] - b.data[None, :, :]
        out[rows] = np.einsum("ijk,ijk->ij", diff, diff)

    def grad_fn(g):
        ga = np.empty_like(a.data)
        gb = np.zeros_like(b.data)
        for rows in _row_blocks(n, m, d):
            diff = a.data[rows, None, :] - b.data[None, :, :]
            w = 2.0 * g[rows]
            ga[rows] = np.einsum("ij,ijk->ik", w, diff)
            gb -= np.einsum("ij,ijk->jk", w, diff)
        return ga, gb

    return _emit("pair_sq_dist", (a, b), out, grad_fn)


def l2norm_rows(x) -> Tensor:
    """Scale each row to unit Euclidean norm; zero rows stay zero."""
    x = _as_tensor(x)
    if x.data.ndim != 2:
        raise ShapeError("l2norm_rows", [x.shape], "expects a 2-D matrix")
    norms = np.sqrt((x.data * x.data).sum(axis=1, keepdims=True))
    nonzero = norms > 0
    safe = np.where(nonzero, norms, 1.0)
    y = np.where(nonzero, x.data / safe, 0.0)

    def grad_fn(g):
        proj = (g * y).sum(axis=1, keepdims=True)
        return (np.where(nonzero, (g - y * proj) / safe, 0.0),)

    return _emit("l2norm_rows", (x,), y, grad_fn)


# ── Shape plumbing ───────────────────────────────────────


def reshape(x, shape: Sequence[int]) -> Tensor:
    x = _as_tensor(x)
    shape = tuple(shape)
    if int(np.prod(shape)) != x.size:
        raise ShapeError("reshape", [x.shape, shape])
    return _emit("reshape", (x,), x.data.reshape(shape), lambda g: (g.reshape(x.shape),))


def transpose(x) -> Tensor:
    x = _as_tensor(x)
    if x.data.ndim != 2:
        raise ShapeError("transpose", [x.shape], "expects a 2-D matrix")
    return _emit("transpose", (x,), x.data.T.copy(), lambda g: (g.T,))


def gather_rows(x, index) -> Tensor:
    """Select rows of a 2-D tensor; repeated indices accumulate gradient."""
    x = _as_tensor(x)
    idx = np.asarray(index, dtype=np.int64).reshape(-1)
    if x.data.ndim != 2:
        raise ShapeError("gather_rows", [x.shape], "expects a 2-D matrix")
    if idx.size and (idx.min() < 0 or idx.max() >= x.shape[0]):
        raise ShapeError("gather_rows", [x.shape, idx.shape], "row index out of range")

    def grad_fn(g):
        full = np.zeros_like(x.data)
        np.add.at(full, idx, g)
        return (full,)

    return _emit("gather_rows", (x,), x.data[idx], grad_fn)


# ── Convolution ──────────────────────────────────────────


def conv2d(x, weight, bias=None) -> Tensor:
    """Stride-1 convolution with symmetric zero padding (size preserving).

    x is ``(C, H, W)`` or ``(N, C, H, W)``; weight ``(O, C, k, k)`` with odd
    k; bias ``(O,)`` or None.  Output keeps the batch layout of x.
    """
    x, weight = _as_tensor(x), _as_tensor(weight)
    inputs: list[Tensor] = [x, weight]
    if bias is not None:
        bias = _as_tensor(bias)
        inputs.append(bias)

    batched = x.data.ndim == 4
    if x.data.ndim not in (3, 4) or weight.data.ndim != 4:
        raise ShapeError("conv2d", [t.shape for t in inputs])
    xd = x.data if batched else x.data[None]
    out_ch, in_ch, kh, kw = weight.shape
    if kh != kw or kh % 2 == 0 or xd.shape[1] != in_ch:
        raise ShapeError("conv2d", [t.shape for t in inputs], "needs odd square kernel matching input channels")
    if bias is not None and bias.shape != (out_ch,):
        raise ShapeError("conv2d", [t.shape for t in inputs], "bias must be (out_channels,)")

    pad = kh // 2
    xp = np.pad(xd, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    windows = sliding_window_view(xp, (kh, kw), axis=(2, 3))        # N,C,H,W,k,k
    out = np.tensordot(windows, weight.data, axes=([1, 4, 5], [1, 2, 3]))  # N,H,W,O
    out = out.transpose(0, 3, 1, 2)
    if bias is not None:
        out = out + bias.data[None, :, None, None]
    out = np.ascontiguousarray(out)

    def grad_fn(g):
        gd = g if batched else g[None]
        g_w = np.tensordot(gd, windows, axes=([0, 2, 3], [0, 2, 3]))   # O,C,k,k
        gp = np.pad(gd, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
        g_windows = sliding_window_view(gp, (kh, kw), axis=(2, 3))     # N,O,H,W,k,k
        flipped = weight.data[:, :, ::-1, ::-1]
        g_x = np.tensordot(g_windows, flipped, axes=([1, 4, 5], [0, 2, 3])).transpose(0, 3, 1, 2)
        g_x = g_x if batched else g_x[0]
        grads = [np.ascontiguousarray(g_x), g_w]
        if bias is not None:
            grads.append(gd.sum(axis=(0, 2, 3)))
        return tuple(grads)

    return _emit("conv2d", inputs, out if batched else out[0], grad_fn)


# ── Dispatcher ───────────────────────────────────────────

OPS: dict[str, Callable[..., Tensor]] = {
    "conv2d": conv2d,
    "add": add,
    "sub": sub,
    "mul": mul,
    "relu": relu,
    "tanh": tanh,
    "sum": sum_,
    "square": square,
    "dot": dot,
    "l2norm_rows": l2norm_rows,
    "matmul": matmul,
    "pair_sq_dist": pair_sq_dist,
    "reciprocal": reciprocal,
    "reshape": reshape,
    "transpose": transpose,
    "gather_rows": gather_rows,
}


def forward_op(op: str, inputs: Sequence, **kwargs) -> Tensor:
    """Apply the named operation; unknown names raise ``ShapeError``."""
    fn = OPS.get(op)
    if fn is None:
        raise ShapeError(op, [getattr(t, "shape", ()) for t in inputs], "unknown operation")
    return fn(*inputs, **kwargs)


# ── Verification oracle ──────────────────────────────────


def finite_diff_check(
    f: Callable[[Tensor], Tensor],
    params: Tensor,
    h: float = 1e-5,
    samples: Optional[int] = None,
    rng: Optional[np.random.Generator] = None,
) -> float:
    """Max relative error between tape gradients and central differences.

    Error per coordinate is ``|analytic - numeric| / max(1, |numeric|)``.
    With *samples* set, only that many random coordinates are checked.
    """
    if h <= 0:
        raise ValueError("finite_diff_check needs h > 0")
    was = params.requires_grad
    params.requires_grad = True
    try:
        with Tape() as tape:
            loss = f(params)
        if loss.size != 1 or not np.isfinite(loss.data).all():
            raise NonFiniteError("finite_diff_check", "loss at base point")
        analytic = tape.backward(loss, [params])[params].reshape(-1)

        flat = params.data.reshape(-1)
        coords = np.arange(flat.size)
        if samples is not None and samples < flat.size:
            rng = rng or np.random.default_rng(0)
            coords = rng.choice(flat.size, size=samples, replace=False)

        worst = 0.0
        for i in coords:
            orig = flat[i]
            flat[i] = orig + h
            up = _scalar(f(params))
            flat[i] = orig - h
            down = _scalar(f(params))
            flat[i] = orig
            numeric = (up - down) / (2.0 * h)
            err = abs(analytic[i] - numeric) / max(1.0, abs(numeric))
            worst = max(worst, err)
        return worst
    finally:
        params.requires_grad = was


def _scalar(t: Tensor) -> float:
    v = float(t.data.reshape(-1)[0])
    if not np.isfinite(v):
        raise NonFiniteError("finite_diff_check", "loss at perturbed point")
    return v
