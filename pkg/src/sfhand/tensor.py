"""Dense tensors with a reverse-mode differentiation tape.

Values are numpy arrays in a configurable precision: float32 for training
and streaming, float64 for gradient checks. Every operation is a pure
function of immutable values that appends one record to the owning tape;
``Tape.backward`` runs a single reversed sweep over the records (creation
order is topological by construction) and returns gradients for every
named parameter.

A tape is single-owner and single-threaded. ``Tape.reset`` drops the op
records of the last step but keeps registered parameters alive, so one
tape serves a whole training run.
"""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

from .errors import DimensionError, NumericalError, UsageError

_ALLOWED_DTYPES = (np.dtype(np.float32), np.dtype(np.float64))


class Tensor:
    """One node of the tape: an immutable array plus its backward rule."""

    __slots__ = ("tape", "value", "parents", "bwd", "grad", "name")

    def __init__(self, tape: "Tape", value: np.ndarray, parents=(), bwd=None, name=None):
        self.tape = tape
        self.value = value
        self.parents = parents
        self.bwd = bwd
        self.grad: Optional[np.ndarray] = None
        self.name = name

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    def item(self) -> float:
        return float(self.value)

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.value.shape}{tag})"

    # Operator sugar; all routes into the module-level ops below.
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(_lift(self.tape, other), self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(_lift(self.tape, other), self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return slice_(self, key)

    @property
    def T(self):
        return transpose(self)


class Tape:
    """Ordered op records plus named leaf parameters."""

    def __init__(self, dtype="float32", check_finite: bool = False):
        self.dtype = np.dtype(dtype)
        if self.dtype not in _ALLOWED_DTYPES:
            raise UsageError(f"unsupported dtype {dtype!r}; use float32 or float64")
        self.params: dict[str, Tensor] = {}
        self.nodes: list[Tensor] = []
        self.check_finite = check_finite

    def parameter(self, name: str, value) -> Tensor:
        if name in self.params:
            raise UsageError(f"parameter {name!r} already registered")
        arr = np.array(value, dtype=self.dtype, order="C")  # preserves 0-d
        t = Tensor(self, arr, name=name)
        self.params[name] = t
        self.nodes.append(t)
        return t

    def constant(self, value) -> Tensor:
        t = Tensor(self, np.asarray(value, dtype=self.dtype))
        self.nodes.append(t)
        return t

    def reset(self) -> None:
        """Drop op records, keep parameters registered and their values."""
        self.nodes = list(self.params.values())
        for p in self.nodes:
            p.grad = None

    def set_param(self, name: str, value: np.ndarray) -> None:
        """Replace a parameter's value (optimizer step / checkpoint load)."""
        p = self.params[name]
        arr = np.array(value, dtype=self.dtype, order="C")
        if arr.shape != p.value.shape:
            raise DimensionError(
                f"parameter {name!r}: new shape {arr.shape} != {p.value.shape}"
            )
        p.value = arr

    def param_values(self) -> dict[str, np.ndarray]:
        return {name: p.value for name, p in self.params.items()}

    def backward(self, loss: Tensor) -> dict[str, np.ndarray]:
        """Gradient of a scalar loss w.r.t. every named parameter."""
        if loss.tape is not self:
            raise UsageError("loss tensor belongs to another tape")
        if loss.value.shape != ():
            raise UsageError(f"loss must be scalar, got shape {loss.value.shape}")
        for n in self.nodes:
            n.grad = None
        loss.grad = np.ones((), dtype=self.dtype)
        for n in reversed(self.nodes):
            if n.grad is not None and n.bwd is not None:
                n.bwd(n.grad)
        return {
            name: (p.grad if p.grad is not None else np.zeros_like(p.value))
            for name, p in self.params.items()
        }


def _record(tape: Tape, value: np.ndarray, parents, bwd) -> Tensor:
    if tape.check_finite and not np.all(np.isfinite(value)):
        raise NumericalError("non-finite value produced by a tape op")
    t = Tensor(tape, value, parents, bwd)
    tape.nodes.append(t)
    return t


def _lift(tape: Tape, x) -> Tensor:
    if isinstance(x, Tensor):
        if x.tape is not tape:
            raise UsageError("operands live on different tapes")
        return x
    return tape.constant(x)


def _acc(t: Tensor, g: np.ndarray) -> None:
    t.grad = g if t.grad is None else t.grad + g


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    """Sum a broadcast gradient back down to the operand's shape."""
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# elementwise arithmetic


def add(a, b) -> Tensor:
    tape = a.tape if isinstance(a, Tensor) else b.tape
    a, b = _lift(tape, a), _lift(tape, b)
    val = a.value + b.value

    def bwd(g):
        _acc(a, _unbroadcast(g, a.value.shape))
        _acc(b, _unbroadcast(g, b.value.shape))

    return _record(tape, val, (a, b), bwd)


def sub(a, b) -> Tensor:
    tape = a.tape if isinstance(a, Tensor) else b.tape
    a, b = _lift(tape, a), _lift(tape, b)
    val = a.value - b.value

    def bwd(g):
        _acc(a, _unbroadcast(g, a.value.shape))
        _acc(b, _unbroadcast(-g, b.value.shape))

    return _record(tape, val, (a, b), bwd)


def mul(a, b) -> Tensor:
    tape = a.tape if isinstance(a, Tensor) else b.tape
    a, b = _lift(tape, a), _lift(tape, b)
    val = a.value * b.value

    def bwd(g):
        _acc(a, _unbroadcast(g * b.value, a.value.shape))
        _acc(b, _unbroadcast(g * a.value, b.value.shape))

    return _record(tape, val, (a, b), bwd)


def div(a, b) -> Tensor:
    tape = a.tape if isinstance(a, Tensor) else b.tape
    a, b = _lift(tape, a), _lift(tape, b)
    val = a.value / b.value

    def bwd(g):
        _acc(a, _unbroadcast(g / b.value, a.value.shape))
        _acc(b, _unbroadcast(-g * a.value / (b.value * b.value), b.value.shape))

    return _record(tape, val, (a, b), bwd)


def neg(a: Tensor) -> Tensor:
    def bwd(g):
        _acc(a, -g)

    return _record(a.tape, -a.value, (a,), bwd)


def abs_(a: Tensor) -> Tensor:
    """Elementwise |x| with subgradient 0 at 0."""
    sign = np.sign(a.value)

    def bwd(g):
        _acc(a, g * sign)

    return _record(a.tape, np.abs(a.value), (a,), bwd)


def maximum(a, b) -> Tensor:
    tape = a.tape if isinstance(a, Tensor) else b.tape
    a, b = _lift(tape, a), _lift(tape, b)
    awins = a.value >= b.value  # ties route to the first operand

    def bwd(g):
        _acc(a, _unbroadcast(g * awins, a.value.shape))
        _acc(b, _unbroadcast(g * ~awins, b.value.shape))

    return _record(tape, np.maximum(a.value, b.value), (a, b), bwd)


def minimum(a, b) -> Tensor:
    tape = a.tape if isinstance(a, Tensor) else b.tape
    a, b = _lift(tape, a), _lift(tape, b)
    awins = a.value <= b.value

    def bwd(g):
        _acc(a, _unbroadcast(g * awins, a.value.shape))
        _acc(b, _unbroadcast(g * ~awins, b.value.shape))

    return _record(tape, np.minimum(a.value, b.value), (a, b), bwd)


# ---------------------------------------------------------------------------
# linear algebra and shape plumbing


def matmul(a: Tensor, b: Tensor) -> Tensor:
    tape = a.tape
    b = _lift(tape, b)
    if a.value.ndim != 2 or b.value.ndim != 2:
        raise DimensionError(
            f"matmul expects 2-D operands, got {a.value.shape} and {b.value.shape}"
        )
    if a.value.shape[1] != b.value.shape[0]:
        raise DimensionError(
            f"matmul inner dimensions disagree: {a.value.shape} x {b.value.shape}"
        )
    val = a.value @ b.value

    def bwd(g):
        _acc(a, g @ b.value.T)
        _acc(b, a.value.T @ g)

    return _record(tape, val, (a, b), bwd)


def transpose(a: Tensor) -> Tensor:
    if a.value.ndim != 2:
        raise DimensionError(f"transpose expects a 2-D tensor, got {a.value.shape}")

    def bwd(g):
        _acc(a, g.T)

    return _record(a.tape, a.value.T, (a,), bwd)


def reshape(a: Tensor, shape) -> Tensor:
    def bwd(g):
        _acc(a, g.reshape(a.value.shape))

    return _record(a.tape, a.value.reshape(shape), (a,), bwd)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    if not tensors:
        raise UsageError("concat of an empty sequence")
    tape = tensors[0].tape
    tensors = [_lift(tape, t) for t in tensors]
    val = np.concatenate([t.value for t in tensors], axis=axis)
    sizes = [t.value.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def bwd(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            idx = [slice(None)] * g.ndim
            idx[axis] = slice(lo, hi)
            _acc(t, g[tuple(idx)])

    return _record(tape, val, tuple(tensors), bwd)


def slice_(a: Tensor, key) -> Tensor:
    """Numpy-style indexing; gradients scatter-add back into place."""
    val = a.value[key]

    def bwd(g):
        full = np.zeros_like(a.value)
        np.add.at(full, key, g)
        _acc(a, full)

    return _record(a.tape, val, (a,), bwd)


def embedding(table: Tensor, ids) -> Tensor:
    """Row lookup into a (vocab x d) table by an integer id array."""
    ids = np.asarray(ids)
    if ids.dtype.kind not in "iu":
        raise UsageError("embedding ids must be integers")
    val = table.value[ids]

    def bwd(g):
        full = np.zeros_like(table.value)
        np.add.at(full, ids, g)
        _acc(table, full)

    return _record(table.tape, val, (table,), bwd)


# ---------------------------------------------------------------------------
# reductions


def sum_(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    val = a.value.sum(axis=axis, keepdims=keepdims)

    def bwd(g):
        if axis is None:
            _acc(a, np.broadcast_to(g, a.value.shape).copy())
            return
        if not keepdims:
            g = np.expand_dims(g, axis)
        _acc(a, np.broadcast_to(g, a.value.shape).copy())

    return _record(a.tape, val, (a,), bwd)


def mean_(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    n = a.value.size if axis is None else a.value.shape[axis]
    return mul(sum_(a, axis=axis, keepdims=keepdims), 1.0 / n)


# ---------------------------------------------------------------------------
# nonlinearities

_GELU_C = float(np.sqrt(2.0 / np.pi))


def gelu(a: Tensor) -> Tensor:
    """GELU, tanh approximation."""
    x = a.value
    inner = _GELU_C * (x + 0.044715 * x**3)
    th = np.tanh(inner)
    val = 0.5 * x * (1.0 + th)

    def bwd(g):
        dinner = _GELU_C * (1.0 + 3 * 0.044715 * x**2)
        dx = 0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * dinner
        _acc(a, g * dx)

    return _record(a.tape, val, (a,), bwd)


def sigmoid(a: Tensor) -> Tensor:
    x = a.value
    s = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))), np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))
    s = s.astype(x.dtype, copy=False)

    def bwd(g):
        _acc(a, g * s * (1.0 - s))

    return _record(a.tape, s, (a,), bwd)


def softmax_rows(a: Tensor) -> Tensor:
    """Row-stable softmax over the last axis; degenerate rows go uniform."""
    x = a.value
    shifted = x - x.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=-1, keepdims=True)

    def bwd(g):
        dot = (g * s).sum(axis=-1, keepdims=True)
        _acc(a, s * (g - dot))

    return _record(a.tape, s, (a,), bwd)


def log_softmax_rows(a: Tensor) -> Tensor:
    x = a.value
    shifted = x - x.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    val = shifted - lse
    soft = np.exp(val)

    def bwd(g):
        _acc(a, g - soft * g.sum(axis=-1, keepdims=True))

    return _record(a.tape, val, (a,), bwd)


def layer_norm(a: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis, then scale and shift."""
    x = a.value
    mu = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x - mu) * inv
    val = xhat * gain.value + bias.value

    def bwd(g):
        _acc(gain, _unbroadcast(g * xhat, gain.value.shape))
        _acc(bias, _unbroadcast(g, bias.value.shape))
        dxhat = g * gain.value
        m1 = dxhat.mean(axis=-1, keepdims=True)
        m2 = (dxhat * xhat).mean(axis=-1, keepdims=True)
        _acc(a, inv * (dxhat - m1 - xhat * m2))

    return _record(a.tape, val, (a, gain, bias), bwd)


def cross_entropy(logits: Tensor, targets, weights=None) -> Tensor:
    """Weighted mean cross-entropy of integer class targets.

    ``weights`` are per-row multipliers (defaults to 1); the result is
    sum(w_i * nll_i) / n_rows.
    """
    targets = np.asarray(targets)
    n = logits.value.shape[0]
    if targets.shape != (n,):
        raise DimensionError(f"targets shape {targets.shape} != ({n},)")
    ls = log_softmax_rows(logits)
    picked = slice_(ls, (np.arange(n), targets))
    if weights is None:
        return mul(sum_(picked), -1.0 / n)
    w = np.asarray(weights, dtype=logits.tape.dtype)
    return mul(sum_(mul(picked, logits.tape.constant(w))), -1.0 / n)


def l1(a: Tensor, b, reduction: str = "mean") -> Tensor:
    """Mean or summed absolute difference."""
    d = abs_(sub(a, b))
    if reduction == "mean":
        return mean_(d)
    if reduction == "sum":
        return sum_(d)
    raise UsageError(f"unknown l1 reduction {reduction!r}")
