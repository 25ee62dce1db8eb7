"""Dense 2-D tensors with tape-based reverse-mode differentiation.

Everything downstream (graph encoders, losses, the training loop) runs on
this module: float64 matrices, a small set of differentiable ops, and Adam.
A tape is rebuilt for every training step; ops record onto the innermost
active tape, and only when at least one input participates in gradients.
"""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

__all__ = [
    "Tensor",
    "Tape",
    "ShapeError",
    "NumericError",
    "backward",
    "set_debug_finite",
    "add",
    "sub",
    "mul",
    "scale",
    "neg",
    "matmul",
    "transpose",
    "concat_cols",
    "concat_rows",
    "row_sum",
    "row_mean",
    "sum_all",
    "mean_all",
    "leaky_relu",
    "sigmoid",
    "log",
    "exp",
    "clip_min",
    "rowwise_softmax",
    "rowwise_log_softmax",
    "dropout",
    "reverse_gradient",
    "AdamState",
    "adam_step",
    "zero_grads",
    "glorot",
    "derive_seed",
]


class ShapeError(ValueError):
    """Operand shapes incompatible with the requested operation."""


class NumericError(RuntimeError):
    """Non-finite values, or a numerical routine that failed to converge."""


_DEBUG_FINITE = False


def set_debug_finite(enabled: bool) -> None:
    """Toggle finiteness checks on op outputs (construction always checks)."""
    global _DEBUG_FINITE
    _DEBUG_FINITE = bool(enabled)


class Tensor:
    """A rows x cols float64 matrix, optionally tracked for gradients."""

    __slots__ = ("data", "requires_grad", "grad")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.array(data, dtype=np.float64)
        if arr.ndim == 0:
            arr = arr.reshape(1, 1)
        if arr.ndim != 2:
            raise ShapeError(f"tensors are 2-D; got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise NumericError("non-finite entries in tensor data")
        self.data = arr
        self.requires_grad = bool(requires_grad)
        # Parameters carry an eager zero accumulator; intermediates get one
        # lazily during backward.
        self.grad = np.zeros_like(arr) if requires_grad else None

    @classmethod
    def _from_op(cls, data: np.ndarray, requires_grad: bool) -> "Tensor":
        if _DEBUG_FINITE and not np.all(np.isfinite(data)):
            raise NumericError("non-finite entries produced by an operation")
        t = cls.__new__(cls)
        t.data = data
        t.requires_grad = requires_grad
        t.grad = None
        return t

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape  # type: ignore[return-value]

    def item(self) -> float:
        if self.data.shape != (1, 1):
            raise ShapeError(f"item() needs a 1x1 tensor, got {self.data.shape}")
        return float(self.data[0, 0])

    def zero_grad(self) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        else:
            self.grad.fill(0.0)

    def __matmul__(self, other: "Tensor") -> "Tensor":
        return matmul(self, other)

    def __add__(self, other: "Tensor") -> "Tensor":
        return add(self, other)

    def __sub__(self, other: "Tensor") -> "Tensor":
        return sub(self, other)

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return mul(self, other)
        return scale(self, float(other))

    def __rmul__(self, other):
        return scale(self, float(other))

    def __neg__(self) -> "Tensor":
        return neg(self)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}{flag})"


_TAPE_STACK: list["Tape"] = []


class Tape:
    """Ordered record of differentiable ops, replayed in reverse by backward().

    Creation order is a topological order by construction: an op's inputs
    exist before the op runs, so a single reverse pass visits every op once
    with the full downstream gradient already accumulated.
    """

    def __init__(self):
        self._records: list[tuple[Tensor, tuple[Tensor, ...], Callable]] = []
        self._produced: set[int] = set()

    def __enter__(self) -> "Tape":
        _TAPE_STACK.append(self)
        return self

    def __exit__(self, exc_type, exc, tb) -> bool:
        popped = _TAPE_STACK.pop()
        assert popped is self, "tapes must unwind in LIFO order"
        return False

    def __len__(self) -> int:
        return len(self._records)

    def _record(self, out: Tensor, inputs: tuple[Tensor, ...], vjp: Callable) -> None:
        self._records.append((out, inputs, vjp))
        self._produced.add(id(out))


def _active_tape() -> Tape | None:
    return _TAPE_STACK[-1] if _TAPE_STACK else None


def _record_op(out: Tensor, inputs: tuple[Tensor, ...], vjp: Callable) -> None:
    tape = _active_tape()
    if tape is not None and out.requires_grad:
        tape._record(out, inputs, vjp)


def _accum(t: Tensor, g: np.ndarray) -> None:
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


def backward(tape: Tape, loss: Tensor) -> None:
    """Accumulate d(loss)/dt into t.grad for every tensor feeding loss.

    loss must be 1x1 and produced under this tape. Gradients add onto
    whatever is already in .grad; repeated calls accumulate one unit each.
    """
    if loss.data.shape != (1, 1):
        raise ShapeError(f"loss must be 1x1, got {loss.data.shape}")
    if id(loss) not in tape._produced:
        raise ValueError("loss was not produced under this tape")
    flow: dict[int, np.ndarray] = {id(loss): np.ones((1, 1))}
    holders: dict[int, Tensor] = {id(loss): loss}
    for out, inputs, vjp in reversed(tape._records):
        g = flow.pop(id(out), None)
        if g is None:
            continue  # not on a path to the loss
        _accum(out, g)
        for inp, gi in zip(inputs, vjp(g)):
            if gi is None:
                continue
            key = id(inp)
            if key in flow:
                flow[key] = flow[key] + gi
            else:
                flow[key] = gi
                holders[key] = inp
    # Whatever is left never had a producing record on this tape: leaves.
    for key, g in flow.items():
        _accum(holders[key], g)


def _broadcast_shape(sa: tuple[int, int], sb: tuple[int, int]) -> tuple[int, int]:
    try:
        out = np.broadcast_shapes(sa, sb)
    except ValueError:
        raise ShapeError(f"shapes {sa} and {sb} do not broadcast") from None
    return out  # type: ignore[return-value]


def _reduce_to(g: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    """Sum g over the axes that were broadcast to reach g's shape."""
    if g.shape == shape:
        return g
    axes = tuple(i for i in range(2) if shape[i] == 1 and g.shape[i] != 1)
    return g.sum(axis=axes, keepdims=True)


def add(a: Tensor, b: Tensor) -> Tensor:
    _broadcast_shape(a.data.shape, b.data.shape)
    out = Tensor._from_op(a.data + b.data, a.requires_grad or b.requires_grad)

    def vjp(g, a=a, b=b):
        return (
            _reduce_to(g, a.data.shape) if a.requires_grad else None,
            _reduce_to(g, b.data.shape) if b.requires_grad else None,
        )

    _record_op(out, (a, b), vjp)
    return out


def sub(a: Tensor, b: Tensor) -> Tensor:
    _broadcast_shape(a.data.shape, b.data.shape)
    out = Tensor._from_op(a.data - b.data, a.requires_grad or b.requires_grad)

    def vjp(g, a=a, b=b):
        return (
            _reduce_to(g, a.data.shape) if a.requires_grad else None,
            _reduce_to(-g, b.data.shape) if b.requires_grad else None,
        )

    _record_op(out, (a, b), vjp)
    return out


def mul(a: Tensor, b: Tensor) -> Tensor:
    _broadcast_shape(a.data.shape, b.data.shape)
    out = Tensor._from_op(a.data * b.data, a.requires_grad or b.requires_grad)

    def vjp(g, a=a, b=b):
        return (
            _reduce_to(g * b.data, a.data.shape) if a.requires_grad else None,
            _reduce_to(g * a.data, b.data.shape) if b.requires_grad else None,
        )

    _record_op(out, (a, b), vjp)
    return out


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)
    out = Tensor._from_op(a.data * c, a.requires_grad)

    def vjp(g, c=c):
        return (g * c,)

    _record_op(out, (a,), vjp)
    return out


def neg(a: Tensor) -> Tensor:
    return scale(a, -1.0)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.shape[1] != b.data.shape[0]:
        raise ShapeError(f"matmul shapes {a.data.shape} and {b.data.shape}")
    out = Tensor._from_op(a.data @ b.data, a.requires_grad or b.requires_grad)

    def vjp(g, a=a, b=b):
        return (
            g @ b.data.T if a.requires_grad else None,
            a.data.T @ g if b.requires_grad else None,
        )

    _record_op(out, (a, b), vjp)
    return out


def transpose(a: Tensor) -> Tensor:
    out = Tensor._from_op(a.data.T.copy(), a.requires_grad)

    def vjp(g):
        return (g.T,)

    _record_op(out, (a,), vjp)
    return out


def concat_cols(a: Tensor, b: Tensor) -> Tensor:
    if a.data.shape[0] != b.data.shape[0]:
        raise ShapeError(f"row counts differ: {a.data.shape} vs {b.data.shape}")
    out = Tensor._from_op(np.hstack((a.data, b.data)), a.requires_grad or b.requires_grad)
    split = a.data.shape[1]

    def vjp(g, split=split, a=a, b=b):
        return (
            g[:, :split] if a.requires_grad else None,
            g[:, split:] if b.requires_grad else None,
        )

    _record_op(out, (a, b), vjp)
    return out


def concat_rows(a: Tensor, b: Tensor) -> Tensor:
    if a.data.shape[1] != b.data.shape[1]:
        raise ShapeError(f"column counts differ: {a.data.shape} vs {b.data.shape}")
    out = Tensor._from_op(np.vstack((a.data, b.data)), a.requires_grad or b.requires_grad)
    split = a.data.shape[0]

    def vjp(g, split=split, a=a, b=b):
        return (
            g[:split, :] if a.requires_grad else None,
            g[split:, :] if b.requires_grad else None,
        )

    _record_op(out, (a, b), vjp)
    return out


def row_sum(a: Tensor) -> Tensor:
    out = Tensor._from_op(a.data.sum(axis=1, keepdims=True), a.requires_grad)
    shape = a.data.shape

    def vjp(g, shape=shape):
        return (np.broadcast_to(g, shape),)

    _record_op(out, (a,), vjp)
    return out


def row_mean(a: Tensor) -> Tensor:
    cols = a.data.shape[1]
    out = Tensor._from_op(a.data.mean(axis=1, keepdims=True), a.requires_grad)
    shape = a.data.shape

    def vjp(g, shape=shape, cols=cols):
        return (np.broadcast_to(g / cols, shape),)

    _record_op(out, (a,), vjp)
    return out


def sum_all(a: Tensor) -> Tensor:
    out = Tensor._from_op(np.array([[a.data.sum()]]), a.requires_grad)
    shape = a.data.shape

    def vjp(g, shape=shape):
        return (np.full(shape, g[0, 0]),)

    _record_op(out, (a,), vjp)
    return out


def mean_all(a: Tensor) -> Tensor:
    size = a.data.size
    out = Tensor._from_op(np.array([[a.data.mean()]]), a.requires_grad)
    shape = a.data.shape

    def vjp(g, shape=shape, size=size):
        return (np.full(shape, g[0, 0] / size),)

    _record_op(out, (a,), vjp)
    return out


def leaky_relu(a: Tensor, slope: float = 0.2) -> Tensor:
    x = a.data
    out = Tensor._from_op(np.where(x >= 0, x, slope * x), a.requires_grad)

    def vjp(g, x=x, slope=slope):
        return (g * np.where(x >= 0, 1.0, slope),)

    _record_op(out, (a,), vjp)
    return out


def sigmoid(a: Tensor) -> Tensor:
    x = a.data
    y = np.empty_like(x)
    pos = x >= 0
    y[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    y[~pos] = ex / (1.0 + ex)
    out = Tensor._from_op(y, a.requires_grad)

    def vjp(g, y=y):
        return (g * y * (1.0 - y),)

    _record_op(out, (a,), vjp)
    return out


def log(a: Tensor) -> Tensor:
    if np.any(a.data <= 0.0):
        raise NumericError("log requires strictly positive entries")
    out = Tensor._from_op(np.log(a.data), a.requires_grad)
    x = a.data

    def vjp(g, x=x):
        return (g / x,)

    _record_op(out, (a,), vjp)
    return out


def exp(a: Tensor) -> Tensor:
    y = np.exp(a.data)
    if not np.all(np.isfinite(y)):
        raise NumericError("exp overflowed")
    out = Tensor._from_op(y, a.requires_grad)

    def vjp(g, y=y):
        return (g * y,)

    _record_op(out, (a,), vjp)
    return out


def clip_min(a: Tensor, floor: float) -> Tensor:
    floor = float(floor)
    out = Tensor._from_op(np.maximum(a.data, floor), a.requires_grad)
    x = a.data

    def vjp(g, x=x, floor=floor):
        return (g * (x > floor),)

    _record_op(out, (a,), vjp)
    return out


def rowwise_softmax(a: Tensor) -> Tensor:
    x = a.data
    shifted = x - x.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=1, keepdims=True)
    out = Tensor._from_op(y, a.requires_grad)

    def vjp(g, y=y):
        return (y * (g - (g * y).sum(axis=1, keepdims=True)),)

    _record_op(out, (a,), vjp)
    return out


def rowwise_log_softmax(a: Tensor) -> Tensor:
    x = a.data
    shifted = x - x.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    y = shifted - lse
    out = Tensor._from_op(y, a.requires_grad)

    def vjp(g, y=y):
        return (g - np.exp(y) * g.sum(axis=1, keepdims=True),)

    _record_op(out, (a,), vjp)
    return out


def dropout(a: Tensor, rate: float, seed: int, training: bool = True) -> Tensor:
    """Inverted dropout with the mask drawn from an explicit per-call seed."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return a
    rng = np.random.default_rng(seed)
    mask = (rng.random(a.data.shape) >= rate) / (1.0 - rate)
    out = Tensor._from_op(a.data * mask, a.requires_grad)

    def vjp(g, mask=mask):
        return (g * mask,)

    _record_op(out, (a,), vjp)
    return out


def reverse_gradient(a: Tensor) -> Tensor:
    """Identity forward; exact negation of the gradient on the way back."""
    out = Tensor._from_op(a.data.copy(), a.requires_grad)

    def vjp(g):
        return (-g,)

    _record_op(out, (a,), vjp)
    return out


class AdamState:
    """First and second moment buffers for a fixed parameter list."""

    def __init__(
        self,
        params: Sequence[Tensor],
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in params]
        self.v = [np.zeros_like(p.data) for p in params]


def adam_step(params: Sequence[Tensor], state: AdamState, lr: float) -> None:
    """One bias-corrected Adam update in place; grads are left untouched."""
    if len(params) != len(state.m):
        raise ValueError("parameter list does not match the optimizer state")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**state.t
    c2 = 1.0 - b2**state.t
    for p, m, v in zip(params, state.m, state.v):
        g = p.grad if p.grad is not None else np.zeros_like(p.data)
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p.data -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)


def zero_grads(params: Sequence[Tensor]) -> None:
    for p in params:
        p.zero_grad()


def glorot(rng: np.random.Generator, rows: int, cols: int) -> Tensor:
    """Glorot-uniform initialized parameter tensor."""
    limit = np.sqrt(6.0 / (rows + cols))
    return Tensor(rng.uniform(-limit, limit, size=(rows, cols)), requires_grad=True)


def derive_seed(*parts: int) -> int:
    """Stable integer seed from a tuple of integers (run seed, epoch, layer)."""
    return int(np.random.SeedSequence(tuple(int(p) for p in parts)).generate_state(1)[0])
