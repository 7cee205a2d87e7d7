"""Reverse-mode automatic differentiation over dense float64 numpy arrays.

A ``Tensor`` wraps an ndarray and records the operations applied to it.
Calling :meth:`Tensor.backward` on a scalar result walks the recorded
graph in reverse topological order and accumulates one gradient array
per input, each with the shape of that input.  Gradients of a sum equal
the sum of gradients (the graph accumulates by addition), which is the
whole contract the training code relies on.

Everything is computed in 64-bit floats.  Loss identities downstream are
checked to 1e-9 and 32-bit precision does not survive that near the
log-sum-exp tie region.

All operations are pure; tensors are treated as immutable once built
(optimizers mutate parameter ``data`` in place between graphs, never
inside one).
"""

from __future__ import annotations

import contextlib

import numpy as np
from scipy.special import erf


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible."""


_GRAD_ENABLED = True


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block (evaluation/generation)."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum ``grad`` down to ``shape``, undoing numpy broadcasting."""
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Tensor:
    """A float64 array plus the tape entry that produced it."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "_grad_owned")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._backward = None
        self._grad_owned = False

    # -- basic introspection -------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        """A constant view of the same values, cut off from the graph."""
        return Tensor(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # -- graph construction --------------------------------------------------

    @staticmethod
    def _result(data, parents, backward) -> "Tensor":
        record = _GRAD_ENABLED and any(p.requires_grad for p in parents)
        out = Tensor(data, requires_grad=record)
        if record:
            out._parents = tuple(parents)
            out._backward = backward
        return out

    def backward(self) -> None:
        """Accumulate gradients of this scalar into the graph's tensors."""
        if self.data.ndim != 0:
            raise ShapeError(f"backward() needs a scalar, got shape {self.shape}")
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if parent.requires_grad and id(parent) not in seen:
                    stack.append((parent, False))
        self.grad = np.ones_like(self.data)
        self._grad_owned = True
        for node in reversed(topo):
            if node._backward is not None:
                node._backward(node.grad)

    def _accumulate(self, grad: np.ndarray) -> None:
        # Copy-on-write: borrow the incoming array until a second contribution
        # arrives, so single-consumer tensors (the common case) never copy.
        if self.grad is None:
            self.grad = grad
            self._grad_owned = False
        elif self._grad_owned:
            self.grad += grad
        else:
            self.grad = self.grad + grad
            self._grad_owned = True

    # -- arithmetic ----------------------------------------------------------

    def __add__(self, other):
        other = as_tensor(other)
        out_data = self.data + other.data

        def backward(g):
            if self.requires_grad:
                self._accumulate(_unbroadcast(g, self.shape))
            if other.requires_grad:
                other._accumulate(_unbroadcast(g, other.shape))

        return Tensor._result(out_data, (self, other), backward)

    __radd__ = __add__

    def __neg__(self):
        def backward(g):
            self._accumulate(-g)

        return Tensor._result(-self.data, (self,), backward)

    def __sub__(self, other):
        return self + (-as_tensor(other))

    def __rsub__(self, other):
        return as_tensor(other) + (-self)

    def __mul__(self, other):
        other = as_tensor(other)
        out_data = self.data * other.data

        def backward(g):
            if self.requires_grad:
                self._accumulate(_unbroadcast(g * other.data, self.shape))
            if other.requires_grad:
                other._accumulate(_unbroadcast(g * self.data, other.shape))

        return Tensor._result(out_data, (self, other), backward)

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = as_tensor(other)
        out_data = self.data / other.data

        def backward(g):
            if self.requires_grad:
                self._accumulate(_unbroadcast(g / other.data, self.shape))
            if other.requires_grad:
                other._accumulate(
                    _unbroadcast(-g * self.data / other.data**2, other.shape)
                )

        return Tensor._result(out_data, (self, other), backward)

    def __rtruediv__(self, other):
        return as_tensor(other) / self

    def __pow__(self, exponent):
        if not isinstance(exponent, (int, float)):
            raise TypeError("only constant exponents are supported")
        out_data = self.data**exponent

        def backward(g):
            self._accumulate(g * exponent * self.data ** (exponent - 1))

        return Tensor._result(out_data, (self,), backward)

    def __matmul__(self, other):
        return matmul(self, other)

    # -- shape manipulation --------------------------------------------------

    def reshape(self, *shape):
        orig = self.shape
        out_data = self.data.reshape(*shape)

        def backward(g):
            self._accumulate(g.reshape(orig))

        return Tensor._result(out_data, (self,), backward)

    def transpose(self, axes):
        inverse = np.argsort(axes)
        out_data = self.data.transpose(axes)

        def backward(g):
            self._accumulate(g.transpose(inverse))

        return Tensor._result(out_data, (self,), backward)

    def __getitem__(self, key):
        out_data = self.data[key]
        parts = key if isinstance(key, tuple) else (key,)
        fancy = any(isinstance(p, (np.ndarray, list)) for p in parts)

        def backward(g):
            full = np.zeros_like(self.data)
            if fancy:
                np.add.at(full, key, g)  # repeated indices must accumulate
            else:
                full[key] += g
            self._accumulate(full)

        return Tensor._result(out_data, (self,), backward)

    # -- reductions ----------------------------------------------------------

    def sum(self, axis=None, keepdims=False):
        out_data = self.data.sum(axis=axis, keepdims=keepdims)

        def backward(g):
            if axis is None:
                grad = np.broadcast_to(g, self.shape)
            else:
                g_exp = g if keepdims else np.expand_dims(g, axis)
                grad = np.broadcast_to(g_exp, self.shape)
            self._accumulate(np.ascontiguousarray(grad))

        return Tensor._result(out_data, (self,), backward)

    def mean(self, axis=None, keepdims=False):
        if axis is None:
            count = self.size
        elif isinstance(axis, tuple):
            count = int(np.prod([self.shape[a] for a in axis]))
        else:
            count = self.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) / count


def as_tensor(value) -> Tensor:
    """Wrap scalars/arrays as constant tensors; pass tensors through."""
    if isinstance(value, Tensor):
        return value
    return Tensor(value)


# -- elementwise functions ---------------------------------------------------


def exp(x: Tensor) -> Tensor:
    x = as_tensor(x)
    out_data = np.exp(x.data)

    def backward(g):
        x._accumulate(g * out_data)

    return Tensor._result(out_data, (x,), backward)


def log(x: Tensor) -> Tensor:
    x = as_tensor(x)

    def backward(g):
        x._accumulate(g / x.data)

    return Tensor._result(np.log(x.data), (x,), backward)


def tanh(x: Tensor) -> Tensor:
    x = as_tensor(x)
    out_data = np.tanh(x.data)

    def backward(g):
        x._accumulate(g * (1.0 - out_data**2))

    return Tensor._result(out_data, (x,), backward)


def gelu(x: Tensor) -> Tensor:
    """Exact Gaussian-error-linear unit, x * Phi(x)."""
    x = as_tensor(x)
    cdf = 0.5 * (1.0 + erf(x.data / np.sqrt(2.0)))
    out_data = x.data * cdf

    def backward(g):
        pdf = np.exp(-0.5 * x.data**2) / np.sqrt(2.0 * np.pi)
        x._accumulate(g * (cdf + x.data * pdf))

    return Tensor._result(out_data, (x,), backward)


def absolute(x: Tensor) -> Tensor:
    """|x| with subgradient 0 at x = 0 (np.sign convention)."""
    x = as_tensor(x)

    def backward(g):
        x._accumulate(g * np.sign(x.data))

    return Tensor._result(np.abs(x.data), (x,), backward)


def maximum(a, b) -> Tensor:
    """Elementwise max; exact ties split the gradient half-and-half."""
    a, b = as_tensor(a), as_tensor(b)
    out_data = np.maximum(a.data, b.data)
    wa = (a.data > b.data) + 0.5 * (a.data == b.data)

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g * wa, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g * (1.0 - wa), b.shape))

    return Tensor._result(out_data, (a, b), backward)


# -- linear algebra ----------------------------------------------------------


def matmul(a, b) -> Tensor:
    """Matrix product with numpy batching semantics on leading axes."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul needs >=2-d operands, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul inner extents differ: {a.shape} x {b.shape}")
    out_data = np.matmul(a.data, b.data)

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(np.matmul(g, b.data.swapaxes(-1, -2)), a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(np.matmul(a.data.swapaxes(-1, -2), g), b.shape))

    return Tensor._result(out_data, (a, b), backward)


# -- neural-net primitives ---------------------------------------------------


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    x = as_tensor(x)
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out_data = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        dot = (g * out_data).sum(axis=axis, keepdims=True)
        x._accumulate(out_data * (g - dot))

    return Tensor._result(out_data, (x,), backward)


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    x = as_tensor(x)
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    out_data = shifted - lse
    probs = np.exp(out_data)

    def backward(g):
        x._accumulate(g - probs * g.sum(axis=axis, keepdims=True))

    return Tensor._result(out_data, (x,), backward)


def layer_norm(x: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis to zero mean, unit variance."""
    x = as_tensor(x)
    mu = x.data.mean(axis=-1, keepdims=True)
    var = x.data.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    out_data = (x.data - mu) * inv

    def backward(g):
        g_mean = g.mean(axis=-1, keepdims=True)
        gy_mean = (g * out_data).mean(axis=-1, keepdims=True)
        x._accumulate(inv * (g - g_mean - out_data * gy_mean))

    return Tensor._result(out_data, (x,), backward)


def take_rows(table: Tensor, indices) -> Tensor:
    """Row lookup (embedding): out[..., :] = table[indices[...], :]."""
    table = as_tensor(table)
    idx = np.asarray(indices)
    out_data = table.data[idx]

    def backward(g):
        full = np.zeros_like(table.data)
        np.add.at(full, idx.reshape(-1), g.reshape(-1, table.shape[-1]))
        table._accumulate(full)

    return Tensor._result(out_data, (table,), backward)


def gather_last(x: Tensor, indices) -> Tensor:
    """Pick one entry along the last axis: out[...] = x[..., idx[...]]."""
    x = as_tensor(x)
    idx = np.asarray(indices)
    if idx.shape != x.shape[:-1]:
        raise ShapeError(f"index shape {idx.shape} does not match {x.shape[:-1]}")
    out_data = np.take_along_axis(x.data, idx[..., None], axis=-1)[..., 0]

    def backward(g):
        full = np.zeros_like(x.data)
        lead = tuple(np.indices(idx.shape))
        np.add.at(full, lead + (idx,), g)
        x._accumulate(full)

    return Tensor._result(out_data, (x,), backward)
