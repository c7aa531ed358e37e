"""Dense float64 tensors with reverse-mode differentiation.

A small define-by-run engine. Each operation computes its value eagerly
with numpy and, while a Tape is active, appends a node holding the
parent tensors plus one vector-Jacobian closure per parent. backward()
sweeps the node list in reverse creation order, which is a valid
topological order because operands always exist before their result.

Everything is float64 end to end; values are never recomputed during
the backward sweep, so a forward pass is bitwise reproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ConfigError,
    ContractError,
    DimensionError,
    GraphError,
    NumericError,
    OracleError,
)

# Stack of currently-active tapes. Only the innermost one records.
_ACTIVE: list["Tape"] = []


class Tensor:
    """Row-major float64 array, optionally tracked for gradients.

    Leaves are built directly (``requires_grad=True`` for parameters);
    interior nodes are produced by the ops below. Tensors hash by
    identity, so they can key gradient dictionaries.
    """

    __slots__ = ("data", "requires_grad", "name", "_tape", "_parents", "_vjps")

    def __init__(self, data, requires_grad=False, name=None):
        arr = np.asarray(data, dtype=np.float64)
        if not np.all(np.isfinite(arr)):
            raise NumericError("tensor data must be finite")
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.name = name
        self._tape = None
        self._parents = ()
        self._vjps = ()

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def item(self):
        if self.data.size != 1:
            raise ContractError("item() needs a single-element tensor")
        return float(self.data.reshape(()))

    def detach(self):
        """Value-identical leaf that blocks gradient flow."""
        out = Tensor.__new__(Tensor)
        out.data = self.data
        out.requires_grad = False
        out.name = None
        out._tape = None
        out._parents = ()
        out._vjps = ()
        return out

    # arithmetic sugar; all routed through the module-level ops
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __repr__(self):
        tag = self.name or ("param" if self.requires_grad else "tensor")
        return f"Tensor({tag}, shape={self.data.shape})"


class Tape:
    """Records operations executed inside a ``with`` block.

    backward(loss, params) returns a dict mapping each requested
    parameter to d(loss)/d(param); parameters the loss never touched
    get an all-zero gradient of matching shape.
    """

    def __init__(self):
        self._nodes = []
        self._closed = False

    def __enter__(self):
        if self._closed:
            raise GraphError("tape cannot be re-entered after use")
        _ACTIVE.append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        _ACTIVE.pop()
        return False

    def backward(self, loss, params=None):
        if not isinstance(loss, Tensor):
            raise GraphError("loss must be a Tensor")
        if loss._tape is not self:
            raise GraphError("loss node was not recorded on this tape")
        if loss.data.size != 1:
            raise ContractError("loss must be scalar")
        self._closed = True

        adjoint = {loss: np.ones_like(loss.data)}
        for node in reversed(self._nodes):
            g = adjoint.pop(node, None)
            if g is None:
                continue
            for parent, vjp in zip(node._parents, node._vjps):
                if not (parent.requires_grad or parent._tape is self):
                    continue  # plain constant: nobody reads its adjoint
                contrib = vjp(g)
                held = adjoint.get(parent)
                adjoint[parent] = contrib if held is None else held + contrib

        if params is None:
            return {p: g for p, g in adjoint.items() if p.requires_grad}
        return {
            p: adjoint.get(p, np.zeros_like(p.data)) for p in params
        }


def _record(value, parents, vjps):
    """Build an interior node, registering it on the active tape."""
    out = Tensor.__new__(Tensor)
    out.data = value
    out.requires_grad = False
    out.name = None
    tape = _ACTIVE[-1] if _ACTIVE else None
    if tape is None:
        out._tape = None
        out._parents = ()
        out._vjps = ()
        return out
    for p in parents:
        if p._tape is not None and p._tape is not tape:
            raise GraphError("operand was recorded on a different tape")
    out._tape = tape
    out._parents = tuple(parents)
    out._vjps = tuple(vjps)
    tape._nodes.append(out)
    return out


def _wrap(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(grad, shape):
    """Reduce ``grad`` back to ``shape`` after numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


# ---------------------------------------------------------------------------
# elementwise / broadcasting ops


def add(a, b):
    a, b = _wrap(a), _wrap(b)
    return _record(
        a.data + b.data,
        (a, b),
        (
            lambda g: _unbroadcast(g, a.data.shape),
            lambda g: _unbroadcast(g, b.data.shape),
        ),
    )


def sub(a, b):
    a, b = _wrap(a), _wrap(b)
    return _record(
        a.data - b.data,
        (a, b),
        (
            lambda g: _unbroadcast(g, a.data.shape),
            lambda g: _unbroadcast(-g, b.data.shape),
        ),
    )


def mul(a, b):
    a, b = _wrap(a), _wrap(b)
    return _record(
        a.data * b.data,
        (a, b),
        (
            lambda g: _unbroadcast(g * b.data, a.data.shape),
            lambda g: _unbroadcast(g * a.data, b.data.shape),
        ),
    )


def div(a, b):
    a, b = _wrap(a), _wrap(b)
    return _record(
        a.data / b.data,
        (a, b),
        (
            lambda g: _unbroadcast(g / b.data, a.data.shape),
            lambda g: _unbroadcast(-g * a.data / (b.data * b.data), b.data.shape),
        ),
    )


def neg(a):
    a = _wrap(a)
    return _record(-a.data, (a,), (lambda g: -g,))


def exp(a):
    a = _wrap(a)
    val = np.exp(a.data)
    return _record(val, (a,), (lambda g: g * val,))


def log(a):
    a = _wrap(a)
    if np.any(a.data <= 0.0):
        raise NumericError("log needs strictly positive input")
    return _record(np.log(a.data), (a,), (lambda g: g / a.data,))


def sqrt(a):
    a = _wrap(a)
    if np.any(a.data < 0.0):
        raise NumericError("sqrt needs non-negative input")
    val = np.sqrt(a.data)
    return _record(val, (a,), (lambda g: g / (2.0 * val),))


def square(a):
    a = _wrap(a)
    return _record(a.data * a.data, (a,), (lambda g: 2.0 * a.data * g,))


def tanh(a):
    a = _wrap(a)
    val = np.tanh(a.data)
    return _record(val, (a,), (lambda g: g * (1.0 - val * val),))


def relu(a):
    a = _wrap(a)
    return _record(
        np.maximum(a.data, 0.0), (a,), (lambda g: g * (a.data > 0.0),)
    )


def softplus(a):
    a = _wrap(a)
    val = np.logaddexp(0.0, a.data)
    # sigmoid via tanh keeps the derivative overflow-free at large |x|
    sig = 0.5 * (1.0 + np.tanh(0.5 * a.data))
    return _record(val, (a,), (lambda g: g * sig,))


def clip(a, lo, hi):
    a = _wrap(a)
    if not lo < hi:
        raise ConfigError("clip needs lo < hi")
    inside = (a.data >= lo) & (a.data <= hi)
    return _record(np.clip(a.data, lo, hi), (a,), (lambda g: g * inside,))


# ---------------------------------------------------------------------------
# linear algebra and shape ops


def matmul(a, b):
    a, b = _wrap(a), _wrap(b)
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise DimensionError("matmul needs 2-d operands")
    if a.data.shape[1] != b.data.shape[0]:
        raise DimensionError(
            f"matmul inner dims differ: {a.data.shape} @ {b.data.shape}"
        )
    return _record(
        a.data @ b.data,
        (a, b),
        (lambda g: g @ b.data.T, lambda g: a.data.T @ g),
    )


def transpose(a):
    a = _wrap(a)
    if a.data.ndim != 2:
        raise DimensionError("transpose needs a 2-d tensor")
    return _record(a.data.T, (a,), (lambda g: g.T,))


def reshape(a, shape):
    a = _wrap(a)
    val = a.data.reshape(shape)
    return _record(val, (a,), (lambda g: g.reshape(a.data.shape),))


def concat_cols(parts):
    parts = [_wrap(p) for p in parts]
    if not parts:
        raise DimensionError("concat_cols needs at least one tensor")
    rows = parts[0].data.shape[0]
    for p in parts:
        if p.data.ndim != 2 or p.data.shape[0] != rows:
            raise DimensionError("concat_cols needs 2-d tensors with equal rows")
    val = np.concatenate([p.data for p in parts], axis=1)
    offsets = np.cumsum([0] + [p.data.shape[1] for p in parts])

    def make_vjp(k):
        lo, hi = offsets[k], offsets[k + 1]
        return lambda g: g[:, lo:hi]

    return _record(val, tuple(parts), tuple(make_vjp(k) for k in range(len(parts))))


def slice_cols(a, start, stop):
    a = _wrap(a)
    if a.data.ndim != 2:
        raise DimensionError("slice_cols needs a 2-d tensor")
    if not (0 <= start < stop <= a.data.shape[1]):
        raise DimensionError("slice_cols bounds out of range")

    def vjp(g):
        out = np.zeros_like(a.data)
        out[:, start:stop] = g
        return out

    return _record(a.data[:, start:stop], (a,), (vjp,))


def slice_rows(a, start, stop):
    a = _wrap(a)
    if a.data.ndim != 2:
        raise DimensionError("slice_rows needs a 2-d tensor")
    if not (0 <= start < stop <= a.data.shape[0]):
        raise DimensionError("slice_rows bounds out of range")

    def vjp(g):
        out = np.zeros_like(a.data)
        out[start:stop] = g
        return out

    return _record(a.data[start:stop], (a,), (vjp,))


def diag_part(a):
    a = _wrap(a)
    if a.data.ndim != 2 or a.data.shape[0] != a.data.shape[1]:
        raise DimensionError("diag_part needs a square matrix")
    n = a.data.shape[0]

    def vjp(g):
        out = np.zeros_like(a.data)
        out[np.arange(n), np.arange(n)] = g
        return out

    return _record(a.data.diagonal().copy(), (a,), (vjp,))


# ---------------------------------------------------------------------------
# reductions


def sum_all(a):
    a = _wrap(a)
    return _record(
        np.asarray(a.data.sum()),
        (a,),
        (lambda g: np.broadcast_to(g, a.data.shape),),
    )


def sum_axis(a, axis, keepdims=False):
    a = _wrap(a)
    val = a.data.sum(axis=axis, keepdims=keepdims)

    def vjp(g):
        gg = g if keepdims else np.expand_dims(g, axis)
        return np.broadcast_to(gg, a.data.shape)

    return _record(val, (a,), (vjp,))


def mean_all(a):
    a = _wrap(a)
    n = a.data.size
    return _record(
        np.asarray(a.data.mean()),
        (a,),
        (lambda g: np.broadcast_to(g / n, a.data.shape),),
    )


# ---------------------------------------------------------------------------
# probability helpers


def softmax_rows(a):
    a = _wrap(a)
    if a.data.ndim != 2:
        raise DimensionError("softmax_rows needs a 2-d tensor")
    shifted = a.data - a.data.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=1, keepdims=True)

    def vjp(g):
        return y * (g - (g * y).sum(axis=1, keepdims=True))

    return _record(y, (a,), (vjp,))


def plogp(a, scale=1.0):
    """Elementwise p * log(p * scale) with the 0 log 0 = 0 convention.

    Entries must be non-negative. The gradient at exactly zero is taken
    as zero, which is the convention that keeps one-hot rows harmless.
    """
    a = _wrap(a)
    if scale <= 0.0:
        raise ConfigError("plogp scale must be positive")
    if np.any(a.data < 0.0):
        raise NumericError("plogp needs non-negative input")
    mask = a.data > 0.0
    val = np.zeros_like(a.data)
    val[mask] = a.data[mask] * np.log(a.data[mask] * scale)

    def vjp(g):
        d = np.zeros_like(a.data)
        d[mask] = np.log(a.data[mask] * scale) + 1.0
        return g * d

    return _record(val, (a,), (vjp,))


_ACTIVATIONS = ("identity", "relu", "tanh", "softplus")


def dense_forward(x, weight, bias, activation="identity"):
    """Affine layer act(x @ W + b) with the standard activations."""
    x = _wrap(x)
    weight = _wrap(weight)
    bias = _wrap(bias)
    if activation not in _ACTIVATIONS:
        raise ConfigError(f"unknown activation {activation!r}")
    if x.data.ndim != 2 or weight.data.ndim != 2 or bias.data.ndim != 1:
        raise DimensionError("dense_forward needs x (n,f), W (f,h), b (h,)")
    if x.data.shape[1] != weight.data.shape[0]:
        raise DimensionError(
            f"dense input width {x.data.shape[1]} != W rows {weight.data.shape[0]}"
        )
    if weight.data.shape[1] != bias.data.shape[0]:
        raise DimensionError("bias length must match W columns")
    if not np.all(np.isfinite(x.data)):
        raise NumericError("dense_forward input must be finite")
    h = add(matmul(x, weight), bias)
    if activation == "relu":
        return relu(h)
    if activation == "tanh":
        return tanh(h)
    if activation == "softplus":
        return softplus(h)
    return h


# ---------------------------------------------------------------------------
# optimization


@dataclass
class AdamState:
    """Adam moments keyed by parameter tensor (identity)."""

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.lr > 0.0:
            raise ConfigError("adam lr must be positive")
        if not (0.0 < self.beta1 < 1.0 and 0.0 < self.beta2 < 1.0):
            raise ConfigError("adam betas must lie in (0, 1)")
        if not self.eps > 0.0:
            raise ConfigError("adam eps must be positive")


def adam_step(params, grads, state):
    """One Adam update, in place on each param's data.

    ``grads`` is the dict returned by Tape.backward (or any mapping
    param -> ndarray). Update rule uses bias-corrected moments with
    eps added outside the square root.
    """
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for p in params:
        g = grads[p]
        if g.shape != p.data.shape:
            raise DimensionError("gradient shape does not match parameter")
        m = state.m.get(p)
        if m is None:
            m = np.zeros_like(p.data)
            state.m[p] = m
            state.v[p] = np.zeros_like(p.data)
        v = state.v[p]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p.data -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)


# ---------------------------------------------------------------------------
# gradient verification


def finite_difference_check(loss_fn, params, eps=1e-5):
    """Worst relative error between backprop and central differences.

    ``loss_fn`` must be deterministic (any randomness frozen by the
    caller) and return a scalar Tensor. Relative error uses
    max(|analytic|, |numeric|, 1e-12) as the denominator.
    """
    if eps <= 0.0:
        raise ConfigError("finite-difference eps must be positive")
    with Tape() as tape:
        loss = loss_fn()
    base = float(loss.data)
    again = float(loss_fn().data)
    if base != again:
        raise OracleError("loss_fn is not deterministic; cannot verify gradients")
    grads = tape.backward(loss, list(params))

    worst = 0.0
    for p in params:
        flat = p.data.reshape(-1)
        gflat = grads[p].reshape(-1)
        for i in range(flat.size):
            keep = flat[i]
            flat[i] = keep + eps
            f_plus = float(loss_fn().data)
            flat[i] = keep - eps
            f_minus = float(loss_fn().data)
            flat[i] = keep
            numeric = (f_plus - f_minus) / (2.0 * eps)
            analytic = gflat[i]
            denom = max(abs(analytic), abs(numeric), 1e-12)
            worst = max(worst, abs(analytic - numeric) / denom)
    return worst


def glorot(rng, fan_in, fan_out):
    """Gaussian Glorot init; the shared default for dense layers."""
    std = math.sqrt(2.0 / (fan_in + fan_out))
    return rng.normal(0.0, std, size=(fan_in, fan_out))
