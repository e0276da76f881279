"""Minimal dense reverse-mode automatic differentiation on numpy arrays.

The graph is built eagerly: every op returns a Tensor holding its value and,
when gradients are enabled, closures that map the output cotangent to parent
cotangents.  Everything is float64 by default; float32 is available through
the ``dtype`` module attribute for callers that want it.

Only the small op set the rest of the package needs is implemented.  No
general broadcasting rules beyond numpy's own; backward passes un-broadcast
by summing over expanded axes.
"""

from __future__ import annotations

import numpy as np

dtype = np.float64

_grad_enabled = True


class no_grad:
    """Context manager that disables graph recording inside its body."""

    def __enter__(self):
        global _grad_enabled
        self._prev = _grad_enabled
        _grad_enabled = False
        return self

    def __exit__(self, *exc):
        global _grad_enabled
        _grad_enabled = self._prev
        return False


def _as_array(x) -> np.ndarray:
    if isinstance(x, np.ndarray):
        if x.dtype == dtype:
            return x
        return x.astype(dtype)
    return np.asarray(x, dtype=dtype)


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` (inverse of numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_vjps")

    def __init__(self, data, requires_grad: bool = False,
                 parents: tuple = (), vjps: tuple = ()):
        self.data = _as_array(data)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = parents
        self._vjps = vjps

    # -- construction helpers -------------------------------------------------

    @staticmethod
    def param(data) -> "Tensor":
        return Tensor(data, requires_grad=True)

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, grad={self.requires_grad})"

    # -- backward -------------------------------------------------------------

    def backward(self):
        if self.data.size != 1:
            raise ValueError("backward() requires a scalar tensor")
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node.grad is None:
                continue
            for parent, vjp in zip(node._parents, node._vjps):
                g = vjp(node.grad)
                # accumulation rebinds, so aliasing the upstream grad is fine
                parent.grad = g if parent.grad is None else parent.grad + g

    def zero_grad(self):
        self.grad = None

    # -- operator sugar -------------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return gather(self, key)


def _wrap(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data, inputs: tuple, vjps: tuple) -> Tensor:
    """Build an op output, recording parents only for grad-requiring inputs."""
    if _grad_enabled:
        parents, kept = [], []
        for t, v in zip(inputs, vjps):
            if t.requires_grad or t._parents:
                parents.append(t)
                kept.append(v)
        if parents:
            out = Tensor(data, requires_grad=True,
                         parents=tuple(parents), vjps=tuple(kept))
            return out
    return Tensor(data)


# -- arithmetic ---------------------------------------------------------------


def add(a, b):
    a, b = _wrap(a), _wrap(b)
    return _make(a.data + b.data, (a, b),
                 (lambda g: _unbroadcast(g, a.data.shape),
                  lambda g: _unbroadcast(g, b.data.shape)))


def sub(a, b):
    a, b = _wrap(a), _wrap(b)
    return _make(a.data - b.data, (a, b),
                 (lambda g: _unbroadcast(g, a.data.shape),
                  lambda g: _unbroadcast(-g, b.data.shape)))


def mul(a, b):
    a, b = _wrap(a), _wrap(b)
    return _make(a.data * b.data, (a, b),
                 (lambda g: _unbroadcast(g * b.data, a.data.shape),
                  lambda g: _unbroadcast(g * a.data, b.data.shape)))


def div(a, b):
    a, b = _wrap(a), _wrap(b)
    return _make(a.data / b.data, (a, b),
                 (lambda g: _unbroadcast(g / b.data, a.data.shape),
                  lambda g: _unbroadcast(-g * a.data / (b.data * b.data),
                                         b.data.shape)))


def matmul(a, b):
    a, b = _wrap(a), _wrap(b)
    return _make(a.data @ b.data, (a, b),
                 (lambda g: g @ b.data.T,
                  lambda g: a.data.T @ g))


# -- elementwise functions ----------------------------------------------------


def square(a):
    a = _wrap(a)
    return _make(a.data * a.data, (a,), (lambda g: 2.0 * a.data * g,))


def sqrt(a):
    a = _wrap(a)
    out = np.sqrt(a.data)
    return _make(out, (a,), (lambda g: 0.5 * g / out,))


def exp(a):
    a = _wrap(a)
    out = np.exp(a.data)
    return _make(out, (a,), (lambda g: g * out,))


def log(a):
    a = _wrap(a)
    return _make(np.log(a.data), (a,), (lambda g: g / a.data,))


def sin(a):
    a = _wrap(a)
    return _make(np.sin(a.data), (a,), (lambda g: g * np.cos(a.data),))


def cos(a):
    a = _wrap(a)
    return _make(np.cos(a.data), (a,), (lambda g: -g * np.sin(a.data),))


def arcsin(a):
    a = _wrap(a)
    return _make(np.arcsin(a.data), (a,),
                 (lambda g: g / np.sqrt(1.0 - a.data * a.data),))


def arctan(a):
    a = _wrap(a)
    return _make(np.arctan(a.data), (a,),
                 (lambda g: g / (1.0 + a.data * a.data),))


def absolute(a):
    a = _wrap(a)
    return _make(np.abs(a.data), (a,), (lambda g: g * np.sign(a.data),))


def relu(a):
    a = _wrap(a)
    mask = a.data > 0.0
    return _make(np.where(mask, a.data, 0.0), (a,), (lambda g: g * mask,))


def sigmoid(a):
    a = _wrap(a)
    # evaluate through e^-|x| only, stable at both tails
    en = np.exp(-np.abs(a.data))
    out = np.where(a.data >= 0.0, 1.0 / (1.0 + en), en / (1.0 + en))
    return _make(out, (a,), (lambda g: g * out * (1.0 - out),))


def softplus(a):
    a = _wrap(a)
    # log(1 + e^x) = max(x, 0) + log1p(e^-|x|), stable at both tails
    en = np.exp(-np.abs(a.data))
    out = np.maximum(a.data, 0.0) + np.log1p(en)
    sig = np.where(a.data >= 0.0, 1.0 / (1.0 + en), en / (1.0 + en))
    return _make(out, (a,), (lambda g: g * sig,))


def clip01(a):
    """Clamp to [0, 1] with unit subgradient on the closed interval."""
    a = _wrap(a)
    mask = (a.data >= 0.0) & (a.data <= 1.0)
    return _make(np.clip(a.data, 0.0, 1.0), (a,), (lambda g: g * mask,))


def tanh(a):
    a = _wrap(a)
    out = np.tanh(a.data)
    return _make(out, (a,), (lambda g: g * (1.0 - out * out),))


# -- reductions / shape -------------------------------------------------------


def tsum(a, axis=None, keepdims=False):
    a = _wrap(a)
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def vjp(g):
        if axis is None:
            return np.broadcast_to(g, a.data.shape).copy()
        gg = g
        if not keepdims:
            gg = np.expand_dims(g, axis)
        return np.broadcast_to(gg, a.data.shape).copy()

    return _make(out, (a,), (vjp,))


def tmean(a, axis=None, keepdims=False):
    a = _wrap(a)
    n = a.data.size if axis is None else a.data.shape[axis]
    return mul(tsum(a, axis=axis, keepdims=keepdims), 1.0 / n)


def reshape(a, shape):
    a = _wrap(a)
    return _make(a.data.reshape(shape), (a,),
                 (lambda g: g.reshape(a.data.shape),))


def concat(tensors, axis=-1):
    tensors = [_wrap(t) for t in tensors]
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    offs = np.cumsum([0] + sizes)

    def make_vjp(i):
        def vjp(g):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(offs[i], offs[i + 1])
            return g[tuple(sl)]
        return vjp

    return _make(data, tuple(tensors),
                 tuple(make_vjp(i) for i in range(len(tensors))))


def gather(a, key):
    """Index with any numpy-legal key; backward scatter-adds."""
    a = _wrap(a)
    out = a.data[key]

    def vjp(g):
        acc = np.zeros_like(a.data)
        np.add.at(acc, key, g)
        return acc

    return _make(out, (a,), (vjp,))


def where_const(cond: np.ndarray, a, b):
    """Select between two tensors with a constant boolean mask."""
    a, b = _wrap(a), _wrap(b)
    return _make(np.where(cond, a.data, b.data), (a, b),
                 (lambda g: _unbroadcast(np.where(cond, g, 0.0), a.data.shape),
                  lambda g: _unbroadcast(np.where(cond, 0.0, g), b.data.shape)))


def value(x) -> np.ndarray:
    """Raw numpy view of a Tensor (or pass numpy through)."""
    return x.data if isinstance(x, Tensor) else np.asarray(x)
