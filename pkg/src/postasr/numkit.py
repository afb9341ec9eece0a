"""Dense N-d float arrays with reverse-mode automatic differentiation.

Storage is float32 by default (a tape may be created with float64 for
high-precision checks); reductions always accumulate in float64. Elementwise
primitives require exact shape agreement and never broadcast implicitly;
``broadcast_to`` is the one explicit way to expand a shape. A ``Tape``
records primitive applications in order, and ``Tape.backward`` replays the
record once, in reverse, accumulating a gradient per node.

Every operation is deterministic; the only stochastic primitive, ``dropout``,
takes an explicit seed and a train/eval flag and is the identity at eval.
"""

from __future__ import annotations

import math

import numpy as np

__all__ = [
    "Tape",
    "Tensor",
    "softmax",
    "log_softmax",
    "layer_norm",
    "relu",
    "gelu",
    "exp",
    "log",
    "dropout",
    "embedding",
    "matmul",
    "broadcast_to",
]

_GELU_C = math.sqrt(2.0 / math.pi)


def _as_array(value, dtype) -> np.ndarray:
    return np.asarray(value, dtype=dtype, order="C")


class Tensor:
    """A node in a tape's computation graph: a value plus a gradient slot."""

    __slots__ = ("tape", "value", "grad")

    def __init__(self, tape: "Tape", value: np.ndarray):
        self.tape = tape
        self.value = value
        self.grad: np.ndarray | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    @property
    def ndim(self) -> int:
        return self.value.ndim

    def __repr__(self) -> str:
        return f"Tensor(shape={self.value.shape}, dtype={self.value.dtype})"

    # -- operator sugar -------------------------------------------------

    def __add__(self, other):
        if isinstance(other, Tensor):
            return add(self, other)
        return add_scalar(self, float(other))

    __radd__ = __add__

    def __neg__(self):
        return mul_scalar(self, -1.0)

    def __sub__(self, other):
        if isinstance(other, Tensor):
            return add(self, mul_scalar(other, -1.0))
        return add_scalar(self, -float(other))

    def __rsub__(self, other):
        return add_scalar(mul_scalar(self, -1.0), float(other))

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return mul(self, other)
        return mul_scalar(self, float(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise TypeError("tensor/tensor division is not a primitive; use mul with a reciprocal constant")
        return mul_scalar(self, 1.0 / float(other))

    def __matmul__(self, other):
        return matmul(self, other)

    def sum(self, axis=None):
        return tensor_sum(self, axis=axis)

    def mean(self, axis=None):
        return tensor_mean(self, axis=axis)

    def reshape(self, shape):
        return reshape(self, shape)

    def transpose(self, axes):
        return transpose(self, axes)


class Tape:
    """Ordered record of primitive applications over one computation.

    A tape is single-threaded; independent tapes may run concurrently.
    """

    def __init__(self, dtype=np.float32):
        self.dtype = np.dtype(dtype)
        self._records: list[tuple[Tensor, tuple[Tensor, ...], object]] = []
        self.leaves: list[Tensor] = []
        self._released = False

    def leaf(self, value) -> Tensor:
        if self._released:
            raise ValueError("tape has been released")
        t = Tensor(self, _as_array(value, self.dtype))
        self.leaves.append(t)
        return t

    def constant(self, value) -> Tensor:
        """A graph input whose gradient is computed but normally ignored."""
        return Tensor(self, _as_array(value, self.dtype))

    def _record(self, out: Tensor, inputs: tuple[Tensor, ...], backward_fn) -> Tensor:
        if self._released:
            raise ValueError("tape has been released")
        self._records.append((out, inputs, backward_fn))
        return out

    def release(self) -> None:
        """Drop the recorded graph so its arrays are freed immediately.

        Tensor.tape back references make every graph one big reference
        cycle, which only the cyclic collector would reclaim; training
        loops allocate gigabytes per step, so they release each tape as
        soon as its gradients have been read. Values and gradients
        already extracted stay valid; recording anything further on the
        tape is an error.
        """
        self._records = []
        self.leaves = []
        self._released = True

    def _make(self, value: np.ndarray, inputs: tuple[Tensor, ...], backward_fn) -> Tensor:
        out = Tensor(self, np.asarray(value, dtype=self.dtype, order="C"))
        return self._record(out, inputs, backward_fn)

    def backward(self, loss: Tensor) -> None:
        """Accumulate d(loss)/d(node) into every node's ``grad``.

        ``loss`` must be a scalar (shape ``()``). Each recorded primitive is
        visited exactly once, in reverse application order.
        """
        if self._released:
            raise ValueError("tape has been released")
        if loss.tape is not self:
            raise ValueError("loss does not belong to this tape")
        if loss.value.shape != ():
            raise ValueError(f"backward requires a scalar loss, got shape {loss.value.shape}")
        for out, inputs, _ in self._records:
            out.grad = None
            for t in inputs:
                t.grad = None
        for t in self.leaves:
            t.grad = None
        loss.grad = np.ones((), dtype=self.dtype)
        for out, inputs, backward_fn in reversed(self._records):
            if out.grad is None:
                continue
            gs = backward_fn(out.grad)
            for t, g in zip(inputs, gs):
                if g is None:
                    continue
                if t.grad is None:
                    t.grad = np.asarray(g, dtype=self.dtype, order="C")
                else:
                    t.grad = t.grad + np.asarray(g, dtype=self.dtype)


def _same_tape(*tensors: Tensor) -> Tape:
    tape = tensors[0].tape
    for t in tensors[1:]:
        if t.tape is not tape:
            raise ValueError("operands belong to different tapes")
    return tape


def _require_same_shape(a: Tensor, b: Tensor, op: str) -> None:
    if a.value.shape != b.value.shape:
        raise ValueError(f"{op}: shape mismatch {a.value.shape} vs {b.value.shape} (use broadcast_to explicitly)")


# -- elementwise ---------------------------------------------------------


def add(a: Tensor, b: Tensor) -> Tensor:
    tape = _same_tape(a, b)
    _require_same_shape(a, b, "add")
    return tape._make(a.value + b.value, (a, b), lambda g: (g, g))


def add_scalar(a: Tensor, c: float) -> Tensor:
    return a.tape._make(a.value + a.tape.dtype.type(c), (a,), lambda g: (g,))


def mul(a: Tensor, b: Tensor) -> Tensor:
    tape = _same_tape(a, b)
    _require_same_shape(a, b, "mul")
    av, bv = a.value, b.value
    return tape._make(av * bv, (a, b), lambda g: (g * bv, g * av))


def mul_scalar(a: Tensor, c: float) -> Tensor:
    c = a.tape.dtype.type(c)
    return a.tape._make(a.value * c, (a,), lambda g: (g * c,))


def exp(a: Tensor) -> Tensor:
    out_val = np.exp(a.value)
    return a.tape._make(out_val, (a,), lambda g: (g * out_val,))


def log(a: Tensor) -> Tensor:
    av = a.value
    return a.tape._make(np.log(av), (a,), lambda g: (g / av,))


def relu(a: Tensor) -> Tensor:
    av = a.value
    return a.tape._make(np.maximum(av, 0), (a,), lambda g: (g * (av > 0),))


def gelu(a: Tensor) -> Tensor:
    """Gaussian error linear unit (tanh approximation); smooth everywhere."""
    x = a.value.astype(np.float64)
    inner = _GELU_C * (x + 0.044715 * x**3)
    tanh = np.tanh(inner)
    out = 0.5 * x * (1.0 + tanh)

    def backward(g):
        dinner = _GELU_C * (1.0 + 3 * 0.044715 * x**2)
        d = 0.5 * (1.0 + tanh) + 0.5 * x * (1.0 - tanh**2) * dinner
        return (g * d.astype(g.dtype),)

    return a.tape._make(out, (a,), backward)


# -- shape manipulation ---------------------------------------------------


def reshape(a: Tensor, shape) -> Tensor:
    orig = a.value.shape
    return a.tape._make(a.value.reshape(shape), (a,), lambda g: (g.reshape(orig),))


def transpose(a: Tensor, axes) -> Tensor:
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))
    return a.tape._make(np.ascontiguousarray(a.value.transpose(axes)), (a,), lambda g: (g.transpose(inv),))


def broadcast_to(a: Tensor, shape) -> Tensor:
    shape = tuple(shape)
    src = a.value.shape
    try:
        out_val = np.broadcast_to(a.value, shape)
    except ValueError as e:
        raise ValueError(f"broadcast_to: cannot broadcast {src} to {shape}") from e

    def backward(g):
        extra = g.ndim - len(src)
        g64 = g.astype(np.float64)
        if extra:
            g64 = g64.sum(axis=tuple(range(extra)))
        keep = tuple(i for i, n in enumerate(src) if n == 1 and g64.shape[i] != 1)
        if keep:
            g64 = g64.sum(axis=keep, keepdims=True)
        return (g64,)

    return a.tape._make(np.array(out_val), (a,), backward)


# -- reductions -----------------------------------------------------------


def tensor_sum(a: Tensor, axis=None) -> Tensor:
    src = a.value.shape
    out_val = a.value.sum(axis=axis, dtype=np.float64)

    def backward(g):
        if axis is None:
            return (np.broadcast_to(g, src),)
        g_exp = np.expand_dims(g, axis)
        return (np.broadcast_to(g_exp, src),)

    return a.tape._make(out_val, (a,), backward)


def tensor_mean(a: Tensor, axis=None) -> Tensor:
    src = a.value.shape
    n = a.value.size if axis is None else src[axis]
    out_val = a.value.mean(axis=axis, dtype=np.float64)

    def backward(g):
        if axis is None:
            return (np.broadcast_to(g, src) / n,)
        g_exp = np.expand_dims(g, axis)
        return (np.broadcast_to(g_exp, src) / n,)

    return a.tape._make(out_val, (a,), backward)


# -- linear algebra --------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product over the last two axes.

    Either both operands carry identical leading (batch) dimensions, or one
    of them is a plain 2-d matrix applied across the other's batch.
    """
    tape = _same_tape(a, b)
    av, bv = a.value, b.value
    if av.ndim < 2 or bv.ndim < 2:
        raise ValueError(f"matmul requires ndim >= 2, got {av.shape} @ {bv.shape}")
    if av.ndim > 2 and bv.ndim > 2 and av.shape[:-2] != bv.shape[:-2]:
        raise ValueError(f"matmul: batch dimensions differ, {av.shape} @ {bv.shape}")
    if av.shape[-1] != bv.shape[-2]:
        raise ValueError(f"matmul: inner dimensions differ, {av.shape} @ {bv.shape}")

    def backward(g):
        ga = np.matmul(g, bv.swapaxes(-1, -2))
        gb = np.matmul(av.swapaxes(-1, -2), g)
        if ga.shape != av.shape:
            ga = ga.reshape((-1,) + av.shape).sum(axis=0, dtype=np.float64)
        if gb.shape != bv.shape:
            gb = gb.reshape((-1,) + bv.shape).sum(axis=0, dtype=np.float64)
        return (ga, gb)

    return tape._make(np.matmul(av, bv), (a, b), backward)


# -- fused neural-net primitives -------------------------------------------


def _softmax_np(x: np.ndarray, axis: int = -1) -> np.ndarray:
    if x.size == 0:
        raise ValueError("softmax of an empty input")
    shifted = x - x.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    denom = e.sum(axis=axis, keepdims=True, dtype=np.float64)
    return (e / denom).astype(x.dtype)


def softmax(x, axis: int = -1):
    """Max-subtracted softmax along ``axis``; accepts a Tensor or an array."""
    if not isinstance(x, Tensor):
        return _softmax_np(np.asarray(x, dtype=np.float64), axis)
    s = _softmax_np(x.value, axis)

    def backward(g):
        dot = (g * s).sum(axis=axis, keepdims=True, dtype=np.float64)
        return (s * (g - dot),)

    return x.tape._make(s, (x,), backward)


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    if x.value.size == 0:
        raise ValueError("log_softmax of an empty input")
    v = x.value.astype(np.float64)
    shifted = v - v.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    out = shifted - lse
    s = np.exp(out)

    def backward(g):
        return (g - s * g.sum(axis=axis, keepdims=True, dtype=np.float64),)

    return x.tape._make(out, (x,), backward)


def _layer_norm_np(x: np.ndarray, gain: np.ndarray, bias: np.ndarray, eps: float) -> np.ndarray:
    x64 = x.astype(np.float64)
    mu = x64.mean(axis=-1, keepdims=True)
    var = x64.var(axis=-1, keepdims=True)
    xhat = (x64 - mu) / np.sqrt(var + eps)
    return (xhat * gain + bias).astype(x.dtype)


def layer_norm(x, gain, bias, eps: float = 1e-5):
    """Normalize the last axis to zero mean and unit variance, then scale/shift.

    ``gain`` and ``bias`` are vectors matching the last dimension. Accepts
    Tensors or plain arrays (all three must agree in kind).
    """
    if eps <= 0:
        raise ValueError("layer_norm: eps must be > 0")
    if not isinstance(x, Tensor):
        x_arr = np.asarray(x, dtype=np.float64)
        g_arr = np.asarray(gain, dtype=np.float64)
        b_arr = np.asarray(bias, dtype=np.float64)
        if g_arr.shape != x_arr.shape[-1:] or b_arr.shape != x_arr.shape[-1:]:
            raise ValueError(
                f"layer_norm: gain/bias shapes {g_arr.shape}/{b_arr.shape} do not match last dim of {x_arr.shape}"
            )
        return _layer_norm_np(x_arr, g_arr, b_arr, eps)

    tape = _same_tape(x, gain, bias)
    d = x.value.shape[-1:]
    if gain.value.shape != d or bias.value.shape != d:
        raise ValueError(
            f"layer_norm: gain/bias shapes {gain.value.shape}/{bias.value.shape} do not match last dim of {x.value.shape}"
        )
    x64 = x.value.astype(np.float64)
    mu = x64.mean(axis=-1, keepdims=True)
    var = x64.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x64 - mu) * inv
    gv = gain.value.astype(np.float64)
    out = xhat * gv + bias.value

    def backward(g):
        n = x.value.shape[-1]
        gg = g.astype(np.float64)
        d_xhat = gg * gv
        m1 = d_xhat.mean(axis=-1, keepdims=True)
        m2 = (d_xhat * xhat).mean(axis=-1, keepdims=True)
        gx = inv * (d_xhat - m1 - xhat * m2)
        lead = tuple(range(gg.ndim - 1))
        g_gain = (gg * xhat).sum(axis=lead) if lead else gg * xhat
        g_bias = gg.sum(axis=lead) if lead else gg
        return (gx, g_gain, g_bias)

    return tape._make(out, (x, gain, bias), backward)


def dropout(x: Tensor, p: float, seed: int, train: bool) -> Tensor:
    """Inverted dropout with an explicit seed; identity when not training."""
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout: p must be in [0, 1), got {p}")
    if not train or p == 0.0:
        return x
    rng = np.random.default_rng(seed)
    mask = (rng.random(x.value.shape) >= p).astype(x.value.dtype) / (1.0 - p)
    return x.tape._make(x.value * mask, (x,), lambda g: (g * mask,))


def embedding(table: Tensor, ids: np.ndarray) -> Tensor:
    """Row lookup: ``table`` is (V, H), ``ids`` any integer shape -> ids.shape + (H,)."""
    ids = np.asarray(ids)
    if not np.issubdtype(ids.dtype, np.integer):
        raise ValueError("embedding: ids must be integers")
    v = table.value.shape[0]
    if ids.size and (ids.min() < 0 or ids.max() >= v):
        raise ValueError(f"embedding: id out of range for table with {v} rows")
    out_val = table.value[ids]

    def backward(g):
        acc = np.zeros(table.value.shape, dtype=np.float64)
        np.add.at(acc, ids.reshape(-1), g.reshape(-1, table.value.shape[-1]))
        return (acc,)

    return table.tape._make(out_val, (table,), backward)
