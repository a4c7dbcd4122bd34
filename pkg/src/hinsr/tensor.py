"""Dense tensors with reverse-mode automatic differentiation.

Every differentiable op returns a new :class:`Tensor` that remembers its
parents and a closure mapping the output gradient to parent gradients.
:func:`backward` rebuilds the execution order (a :class:`Tape`) from the
sequence numbers stamped at creation and walks it in reverse.
"""

from __future__ import annotations

import itertools
import threading
from contextlib import contextmanager

import numpy as np
from numba import njit

from .errors import ConfigError, DimensionError, LabelError, UsageError

_seq = itertools.count()
_state = threading.local()


def is_grad_enabled() -> bool:
    return getattr(_state, "grad_enabled", True)


@contextmanager
def no_grad():
    """Disable graph recording in the current thread."""
    prev = is_grad_enabled()
    _state.grad_enabled = False
    try:
        yield
    finally:
        _state.grad_enabled = prev


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "_seq", "name")
    # make numpy defer to our reflected operators
    __array_ufunc__ = None

    def __init__(self, data, requires_grad=False, dtype=None, name=None):
        if isinstance(data, np.ndarray) and dtype is None and data.dtype.kind == "f":
            arr = data
        else:
            arr = np.asarray(data, dtype=dtype or np.float64)
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._backward = None
        self._seq = -1
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self):
        return self.data.size

    def numpy(self):
        return self.data

    def item(self):
        return self.data.item()

    def zero_grad(self):
        self.grad = None

    def detach(self):
        return Tensor(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    __add__ = lambda self, o: add(self, o)
    __radd__ = lambda self, o: add(o, self)
    __sub__ = lambda self, o: sub(self, o)
    __rsub__ = lambda self, o: sub(o, self)
    __mul__ = lambda self, o: mul(self, o)
    __rmul__ = lambda self, o: mul(o, self)
    __truediv__ = lambda self, o: div(self, o)
    __neg__ = lambda self: mul(self, -1.0)
    __matmul__ = lambda self, o: matmul(self, o)
    __pow__ = lambda self, p: power(self, p)
    __getitem__ = lambda self, idx: getitem(self, idx)

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        return transpose(self, axes or None)

    def tanh(self):
        return tanh(self)

    def sigmoid(self):
        return sigmoid(self)


def as_tensor(x, dtype=None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=dtype or np.float64))


def _result(data, parents, backward) -> Tensor:
    out = Tensor(data)
    if is_grad_enabled() and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward
        out._seq = next(_seq)
    return out


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


class Tape:
    """Differentiable ops reachable from an output, in execution order."""

    def __init__(self, ops):
        self.ops = ops

    @classmethod
    def from_output(cls, out: Tensor) -> "Tape":
        seen = set()
        ops = []
        stack = [out]
        while stack:
            t = stack.pop()
            if t._backward is None or id(t) in seen:
                continue
            seen.add(id(t))
            ops.append(t)
            stack.extend(t._parents)
        ops.sort(key=lambda t: t._seq)
        return cls(ops)

    def __len__(self):
        return len(self.ops)

    def __iter__(self):
        return iter(self.ops)


def backward(loss: Tensor) -> Tape:
    """Populate ``.grad`` of every leaf reachable from the scalar ``loss``.

    Leaf gradients accumulate across calls; intermediate gradients are
    recomputed each time.
    """
    if loss.size != 1:
        raise UsageError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        raise UsageError("loss does not depend on any tensor requiring grad")
    tape = Tape.from_output(loss)
    for t in tape.ops:
        t.grad = None
    loss.grad = np.ones_like(loss.data)
    for t in reversed(tape.ops):
        if t.grad is None:
            continue
        for p, g in zip(t._parents, t._backward(t.grad)):
            if g is None or not p.requires_grad:
                continue
            p.grad = g if p.grad is None else p.grad + g
    return tape


# -- matrix product -----------------------------------------------------------


@njit(cache=True, nogil=True)
def _bmm_kernel(a, b, out):
    # fixed summation order over the inner index, no reassociation
    nb, m, k = a.shape
    n = b.shape[2]
    for t in range(nb):
        for i in range(m):
            row = out[t, i]
            for j in range(n):
                row[j] = 0.0
            for q in range(k):
                aq = a[t, i, q]
                bq = b[t, q]
                for j in range(n):
                    row[j] += aq * bq[j]
    return out


def _mm(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Batched product of raw arrays with numpy broadcasting on leading dims."""
    m, k = a.shape[-2:]
    n = b.shape[-1]
    dtype = np.result_type(a, b)
    if b.ndim == 2 and a.ndim >= 2:
        a2 = np.ascontiguousarray(a.reshape(-1, k), dtype=dtype)
        out = np.empty((1, a2.shape[0], n), dtype=dtype)
        _bmm_kernel(a2[None], np.ascontiguousarray(b, dtype=dtype)[None], out)
        return out.reshape(a.shape[:-1] + (n,))
    batch = np.broadcast_shapes(a.shape[:-2], b.shape[:-2])
    a3 = np.ascontiguousarray(np.broadcast_to(a, batch + (m, k)), dtype=dtype).reshape(-1, m, k)
    b3 = np.ascontiguousarray(np.broadcast_to(b, batch + (k, n)), dtype=dtype).reshape(-1, k, n)
    out = np.empty((a3.shape[0], m, n), dtype=dtype)
    _bmm_kernel(a3, b3, out)
    return out.reshape(batch + (m, n))


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    try:
        np.broadcast_shapes(a.shape[:-2], b.shape[:-2])
    except ValueError:
        raise DimensionError(f"matmul: incompatible batch dims {a.shape} and {b.shape}") from None

    def bw(g):
        ga = gb = None
        if a.requires_grad:
            ga = _unbroadcast(_mm(g, np.swapaxes(b.data, -1, -2)), a.shape)
        if b.requires_grad:
            if b.ndim == 2:
                k = a.shape[-1]
                gb = _mm(a.data.reshape(-1, k).T, g.reshape(-1, g.shape[-1]))
            else:
                gb = _unbroadcast(_mm(np.swapaxes(a.data, -1, -2), g), b.shape)
        return ga, gb

    return _result(_mm(a.data, b.data), (a, b), bw)


# -- elementwise arithmetic ---------------------------------------------------


def _operands(a, b):
    # plain scalars/arrays adopt the dtype of the tensor operand
    if isinstance(a, Tensor) and not isinstance(b, Tensor):
        return a, Tensor(np.asarray(b, dtype=a.dtype))
    if isinstance(b, Tensor) and not isinstance(a, Tensor):
        return Tensor(np.asarray(a, dtype=b.dtype)), b
    return as_tensor(a), as_tensor(b)


def _check_broadcast(a, b, op):
    if a.shape == b.shape:
        return
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise DimensionError(f"{op}: incompatible shapes {a.shape} and {b.shape}") from None


def add(a, b) -> Tensor:
    a, b = _operands(a, b)
    _check_broadcast(a, b, "add")
    return _result(a.data + b.data, (a, b),
                   lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b) -> Tensor:
    a, b = _operands(a, b)
    _check_broadcast(a, b, "sub")
    return _result(a.data - b.data, (a, b),
                   lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a, b) -> Tensor:
    a, b = _operands(a, b)
    _check_broadcast(a, b, "mul")

    def bw(g):
        ga = _unbroadcast(g * b.data, a.shape) if a.requires_grad else None
        gb = _unbroadcast(g * a.data, b.shape) if b.requires_grad else None
        return ga, gb

    return _result(a.data * b.data, (a, b), bw)


def div(a, b) -> Tensor:
    a, b = _operands(a, b)
    _check_broadcast(a, b, "div")

    def bw(g):
        ga = _unbroadcast(g / b.data, a.shape) if a.requires_grad else None
        gb = _unbroadcast(-g * a.data / (b.data * b.data), b.shape) if b.requires_grad else None
        return ga, gb

    return _result(a.data / b.data, (a, b), bw)


def power(x, p: float) -> Tensor:
    x = as_tensor(x)
    return _result(x.data ** p, (x,), lambda g: (g * p * x.data ** (p - 1),))


def exp(x) -> Tensor:
    x = as_tensor(x)
    y = np.exp(x.data)
    return _result(y, (x,), lambda g: (g * y,))


def log(x) -> Tensor:
    x = as_tensor(x)
    return _result(np.log(x.data), (x,), lambda g: (g / x.data,))


def tanh(x) -> Tensor:
    x = as_tensor(x)
    y = np.tanh(x.data)
    return _result(y, (x,), lambda g: (g * (1.0 - y * y),))


def sigmoid(x) -> Tensor:
    x = as_tensor(x)
    # split by sign so exp never overflows
    d = x.data
    e = np.exp(-np.abs(d))
    y = np.where(d >= 0, 1.0 / (1.0 + e), e / (1.0 + e)).astype(d.dtype, copy=False)
    return _result(y, (x,), lambda g: (g * y * (1.0 - y),))


_GELU_C = np.sqrt(2.0 / np.pi)


def gelu(x) -> Tensor:
    """Tanh approximation of GELU (smooth, so finite differences stay clean)."""
    x = as_tensor(x)
    d = x.data
    t = np.tanh(_GELU_C * (d + 0.044715 * (d * d * d)))
    y = 0.5 * d * (1.0 + t)

    def bw(g):
        dt = (1.0 - t * t) * _GELU_C * (1.0 + 3 * 0.044715 * d * d)
        return (g * (0.5 * (1.0 + t) + 0.5 * d * dt),)

    return _result(y, (x,), bw)


# -- reductions and shape ops -------------------------------------------------


def _norm_axis(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(a % ndim for a in axis)


def sum_(x, axis=None, keepdims=False) -> Tensor:
    x = as_tensor(x)
    axes = _norm_axis(axis, x.ndim)

    def bw(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, x.shape).copy(),)

    return _result(x.data.sum(axis=axes, keepdims=keepdims), (x,), bw)


def mean(x, axis=None, keepdims=False) -> Tensor:
    x = as_tensor(x)
    axes = _norm_axis(axis, x.ndim)
    if any(x.shape[a] == 0 for a in axes):
        raise DimensionError(f"mean over empty axis of shape {x.shape}")
    n = int(np.prod([x.shape[a] for a in axes]))

    def bw(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g / n, x.shape).copy(),)

    return _result(x.data.mean(axis=axes, keepdims=keepdims), (x,), bw)


def reshape(x, shape) -> Tensor:
    x = as_tensor(x)
    return _result(x.data.reshape(shape), (x,), lambda g: (g.reshape(x.shape),))


def transpose(x, axes=None) -> Tensor:
    x = as_tensor(x)
    if axes is None:
        axes = tuple(reversed(range(x.ndim)))
    inv = np.argsort(axes)
    return _result(np.transpose(x.data, axes), (x,), lambda g: (np.transpose(g, inv),))


def swapaxes(x, a1, a2) -> Tensor:
    axes = list(range(x.ndim))
    axes[a1], axes[a2] = axes[a2], axes[a1]
    return transpose(x, tuple(axes))


def getitem(x, idx) -> Tensor:
    x = as_tensor(x)
    if isinstance(idx, Tensor):
        idx = idx.data.astype(np.intp)

    def bw(g):
        out = np.zeros_like(x.data)
        np.add.at(out, idx, g)
        return (out,)

    return _result(x.data[idx], (x,), bw)


def concat(tensors, axis=-1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise DimensionError("concat of an empty list")
    try:
        data = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as exc:
        shapes = [t.shape for t in tensors]
        raise DimensionError(f"concat: incompatible shapes {shapes}") from exc
    cuts = np.cumsum([t.shape[axis] for t in tensors])[:-1]
    return _result(data, tuple(tensors), lambda g: tuple(np.split(g, cuts, axis=axis)))


def stack(tensors, axis=0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    try:
        data = np.stack([t.data for t in tensors], axis=axis)
    except ValueError as exc:
        shapes = [t.shape for t in tensors]
        raise DimensionError(f"stack: incompatible shapes {shapes}") from exc
    n = len(tensors)
    return _result(data, tuple(tensors),
                   lambda g: tuple(np.take(g, i, axis=axis) for i in range(n)))


# -- network building blocks --------------------------------------------------


def softmax(x, axis=-1, mask=None) -> Tensor:
    """Softmax along ``axis``; entries where ``mask`` is False get exactly 0."""
    x = as_tensor(x)
    if x.ndim == 0 or x.shape[axis] == 0:
        raise DimensionError(f"softmax over empty axis of shape {x.shape}")
    z = x.data if mask is None else np.where(mask, x.data, -np.inf)
    e = np.exp(z - z.max(axis=axis, keepdims=True))
    y = e / e.sum(axis=axis, keepdims=True)

    def bw(g):
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)

    return _result(y, (x,), bw)


def cross_entropy(logits, gold) -> Tensor:
    """Negative log-likelihood of ``gold`` (0-based) under softmax(logits).

    ``logits`` has shape (..., K); ``gold`` has the leading shape. Returns
    one loss per row (a scalar for 1-D logits).
    """
    logits = as_tensor(logits)
    gold = np.asarray(gold, dtype=np.intp)
    k = logits.shape[-1] if logits.ndim else 0
    if k < 2:
        raise DimensionError(f"cross_entropy needs at least 2 classes, got shape {logits.shape}")
    if gold.shape != logits.shape[:-1]:
        raise DimensionError(f"cross_entropy: gold shape {gold.shape} vs logits {logits.shape}")
    if np.any(gold < 0) or np.any(gold >= k):
        raise LabelError(f"gold class out of range [0, {k})")
    z = logits.data
    m = z.max(axis=-1, keepdims=True)
    lse = m + np.log(np.exp(z - m).sum(axis=-1, keepdims=True))
    logp = z - lse
    picked = np.take_along_axis(logp, gold[..., None], axis=-1)[..., 0]

    def bw(g):
        grad = np.exp(logp)
        np.put_along_axis(grad, gold[..., None],
                          np.take_along_axis(grad, gold[..., None], axis=-1) - 1.0, axis=-1)
        return (grad * np.asarray(g)[..., None],)

    return _result(-picked, (logits,), bw)


def dropout(x, p: float, rng: np.random.Generator | None = None, training=True) -> Tensor:
    """Inverted dropout; the identity when not training or when p == 0."""
    if not 0.0 <= p < 1.0:
        raise ConfigError(f"dropout probability must be in [0, 1), got {p}")
    x = as_tensor(x)
    if not training or p == 0.0:
        return x
    if rng is None:
        raise ConfigError("dropout in training mode needs a seeded rng")
    keep = (rng.random(x.shape) >= p).astype(x.dtype) / (1.0 - p)
    return _result(x.data * keep, (x,), lambda g: (g * keep,))


def embedding(weight, ids) -> Tensor:
    weight = as_tensor(weight)
    ids = np.asarray(ids, dtype=np.intp)
    if ids.size and (ids.min() < 0 or ids.max() >= weight.shape[0]):
        raise DimensionError(f"embedding ids outside [0, {weight.shape[0]})")

    def bw(g):
        out = np.zeros_like(weight.data)
        np.add.at(out, ids.reshape(-1), g.reshape(-1, weight.shape[1]))
        return (out,)

    return _result(weight.data[ids], (weight,), bw)


def layer_norm(x, gamma, beta, eps=1e-5) -> Tensor:
    """Normalize over the last axis, then scale and shift."""
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    d = x.data
    mu = d.mean(axis=-1, keepdims=True)
    xc = d - mu
    inv = 1.0 / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + eps)
    xhat = xc * inv
    n = d.shape[-1]

    def bw(g):
        gx = gg = gb = None
        if x.requires_grad:
            dxhat = g * gamma.data
            gx = inv / n * (n * dxhat - dxhat.sum(axis=-1, keepdims=True)
                            - xhat * (dxhat * xhat).sum(axis=-1, keepdims=True))
        if gamma.requires_grad:
            gg = _unbroadcast(g * xhat, gamma.shape)
        if beta.requires_grad:
            gb = _unbroadcast(g, beta.shape)
        return gx, gg, gb

    return _result(xhat * gamma.data + beta.data, (x, gamma, beta), bw)
