"""Minimal reverse-mode automatic differentiation over numpy float64 arrays.

Small by design: exactly the operations the agents need, deterministic, and
strict about numerical health (non-finite values raise immediately)."""

from __future__ import annotations

import numpy as np


class NumericalError(RuntimeError):
    """A forward value or gradient went NaN/Inf."""


def _check(data: np.ndarray, what: str) -> np.ndarray:
    # a single sum-reduce is much cheaper than isfinite().all() and still
    # catches NaN/Inf, which both propagate through addition
    if not np.isfinite(data.sum()):
        raise NumericalError(f"non-finite values in {what}")
    return data


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, _parents=(), _backward=None):
        self.data = _check(np.asarray(data, dtype=np.float64), "tensor")
        self.grad = None
        self.requires_grad = requires_grad or any(p.requires_grad for p in _parents)
        self._parents = _parents
        self._backward = _backward

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, grad={self.requires_grad})"

    # -- graph mechanics ------------------------------------------------------

    def backward(self):
        if self.data.size != 1:
            raise ValueError("backward() expects a scalar loss")
        topo, seen = [], set()
        stack = [(self, False)]
        while stack:
            t, expanded = stack.pop()
            if expanded:
                topo.append(t)
                continue
            if id(t) in seen or not t.requires_grad:
                continue
            seen.add(id(t))
            stack.append((t, True))
            for p in t._parents:
                stack.append((p, False))
        # grads start as None and materialize on first accumulation; consumers
        # always run before producers in reversed topological order
        for t in topo:
            t.grad = None
        self.grad = np.ones_like(self.data)
        for t in reversed(topo):
            if t._backward is not None:
                t._backward(t.grad)
        # checking leaf grads suffices: NaN/Inf in any interior grad propagates
        # down to the leaves it feeds
        for t in topo:
            if t._backward is None and t.grad is not None:
                _check(t.grad, "gradient")

    def _accum(self, grad):
        if self.requires_grad:
            g = _unbroadcast(grad, self.data.shape)
            # accumulation always rebinds, never mutates, so aliasing g is safe
            self.grad = g if self.grad is None else self.grad + g

    # -- operations -----------------------------------------------------------

    def __add__(self, other):
        other = as_tensor(other)

        def bw(g):
            self._accum(g)
            other._accum(g)

        return Tensor(self.data + other.data, _parents=(self, other), _backward=bw)

    def __sub__(self, other):
        other = as_tensor(other)

        def bw(g):
            self._accum(g)
            other._accum(-g)

        return Tensor(self.data - other.data, _parents=(self, other), _backward=bw)

    def __mul__(self, other):
        other = as_tensor(other)

        def bw(g):
            self._accum(g * other.data)
            other._accum(g * self.data)

        return Tensor(self.data * other.data, _parents=(self, other), _backward=bw)

    def __truediv__(self, other):
        other = as_tensor(other)

        def bw(g):
            self._accum(g / other.data)
            other._accum(-g * self.data / other.data**2)

        return Tensor(self.data / other.data, _parents=(self, other), _backward=bw)

    def __neg__(self):
        def bw(g):
            self._accum(-g)

        return Tensor(-self.data, _parents=(self,), _backward=bw)

    __radd__ = __add__
    __rmul__ = __mul__

    def __rsub__(self, other):
        return as_tensor(other) - self

    def __matmul__(self, other):
        def bw(g):
            self._accum(g @ other.data.T)
            other._accum(self.data.T @ g)

        return Tensor(self.data @ other.data, _parents=(self, other), _backward=bw)

    def sum(self, axis=None, keepdims=False):
        def bw(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            self._accum(np.broadcast_to(g, self.data.shape))

        return Tensor(
            self.data.sum(axis=axis, keepdims=keepdims), _parents=(self,), _backward=bw
        )

    def mean(self, axis=None, keepdims=False):
        n = self.data.size if axis is None else self.data.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / n)

    def reshape(self, *shape):
        def bw(g):
            self._accum(g.reshape(self.data.shape))

        return Tensor(self.data.reshape(*shape), _parents=(self,), _backward=bw)

    def relu(self):
        mask = self.data > 0

        def bw(g):
            self._accum(g * mask)

        return Tensor(self.data * mask, _parents=(self,), _backward=bw)

    def elu(self):
        out = np.where(self.data > 0, self.data, np.expm1(self.data))

        def bw(g):
            self._accum(g * np.where(self.data > 0, 1.0, out + 1.0))

        return Tensor(out, _parents=(self,), _backward=bw)

    def sigmoid(self):
        # piecewise form avoids exp overflow for large negative inputs
        x = self.data
        e = np.exp(-np.abs(x))
        out = np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))

        def bw(g):
            self._accum(g * out * (1.0 - out))

        return Tensor(out, _parents=(self,), _backward=bw)

    def tanh(self):
        out = np.tanh(self.data)

        def bw(g):
            self._accum(g * (1.0 - out**2))

        return Tensor(out, _parents=(self,), _backward=bw)

    def exp(self):
        out = np.exp(self.data)

        def bw(g):
            self._accum(g * out)

        return Tensor(out, _parents=(self,), _backward=bw)

    def log(self):
        def bw(g):
            self._accum(g / self.data)

        return Tensor(np.log(self.data), _parents=(self,), _backward=bw)

    def abs(self):
        sign = np.sign(self.data)

        def bw(g):
            self._accum(g * sign)

        return Tensor(np.abs(self.data), _parents=(self,), _backward=bw)

    def log_softmax(self, axis=-1):
        shifted = self.data - self.data.max(axis=axis, keepdims=True)
        logz = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
        out = shifted - logz
        soft = np.exp(out)

        def bw(g):
            self._accum(g - soft * g.sum(axis=axis, keepdims=True))

        return Tensor(out, _parents=(self,), _backward=bw)

    def softmax(self, axis=-1):
        return self.log_softmax(axis=axis).exp()

    def take_along(self, indices, axis=-1):
        """Gather entries along an axis (e.g. Q values of chosen actions)."""
        idx = np.asarray(indices)
        out = np.take_along_axis(self.data, idx, axis=axis)

        def bw(g):
            full = np.zeros_like(self.data)
            np.put_along_axis(full, idx, g, axis=axis)
            self._accum(full)

        return Tensor(out, _parents=(self,), _backward=bw)

    def detach(self):
        return Tensor(self.data.copy())


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64))


def concat(tensors, axis=-1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.data.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def bw(g):
        for t, piece in zip(tensors, np.split(g, splits, axis=axis)):
            t._accum(piece)

    return Tensor(
        np.concatenate([t.data for t in tensors], axis=axis),
        _parents=tuple(tensors),
        _backward=bw,
    )


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a broadcast gradient back down to the parameter's shape."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for i, dim in enumerate(shape):
        if dim == 1 and grad.shape[i] != 1:
            grad = grad.sum(axis=i, keepdims=True)
    return grad
