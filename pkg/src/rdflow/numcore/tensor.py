"""Reverse-mode automatic differentiation on float64 numpy arrays.

A Tensor wraps an ndarray and, when gradients are enabled, remembers the
operation and parents that produced it.  backward() walks the recorded
graph once in reverse topological order and accumulates gradients into
every tensor with requires_grad set.  All storage is float64; operations
never silently downcast.
"""

from __future__ import annotations

import math
from contextlib import contextmanager
from typing import Callable, Iterable, Sequence

import numpy as np

from ..errors import ContractViolation, NumericFailure

_GRAD_ENABLED = True


@contextmanager
def no_grad():
    """Disable graph recording inside the block (evaluation-only code paths)."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def grad_enabled() -> bool:
    return _GRAD_ENABLED


class Tensor:
    """Node of the differentiation graph.

    data          float64 ndarray (any shape, 0-d allowed)
    grad          accumulated gradient, same shape as data, or None
    requires_grad True for leaf parameters and anything computed from them
    op            primitive name for non-leaf nodes (error reporting)
    """

    __slots__ = ("data", "grad", "requires_grad", "op", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data, dtype=np.float64)
        self.data = arr
        self.grad = None
        self.requires_grad = requires_grad
        self.op: str | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable | None = None

    # -- construction helpers -------------------------------------------------

    @staticmethod
    def _result(data: np.ndarray, op: str, parents: Sequence["Tensor"], backward: Callable) -> "Tensor":
        out = Tensor.__new__(Tensor)
        out.data = data
        out.grad = None
        out.op = op
        if _GRAD_ENABLED and any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = tuple(parents)
            out._backward = backward
        else:
            out.requires_grad = False
            out._parents = ()
            out._backward = None
        return out

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}{flag}, op={self.op!r})"

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    # -- operator sugar --------------------------------------------------------

    def __add__(self, other):
        return add(self, _as_tensor(other))

    def __radd__(self, other):
        return add(_as_tensor(other), self)

    def __sub__(self, other):
        return sub(self, _as_tensor(other))

    def __rsub__(self, other):
        return sub(_as_tensor(other), self)

    def __mul__(self, other):
        return mul(self, _as_tensor(other))

    def __rmul__(self, other):
        return mul(_as_tensor(other), self)

    def __truediv__(self, other):
        return div(self, _as_tensor(other))

    def __rtruediv__(self, other):
        return div(_as_tensor(other), self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, _as_tensor(other))

    def __pow__(self, p):
        return pow_const(self, p)

    def __getitem__(self, key):
        return getitem(self, key)

    @property
    def T(self) -> "Tensor":
        return transpose(self)

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        return sum_(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        return mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape) -> "Tensor":
        return reshape(self, shape if len(shape) > 1 else shape[0])


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a gradient down to `shape`, undoing numpy broadcasting."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# -- elementwise arithmetic ----------------------------------------------------


def add(a: Tensor, b: Tensor) -> Tensor:
    data = a.data + b.data

    def backward(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)

    return Tensor._result(data, "add", (a, b), backward)


def sub(a: Tensor, b: Tensor) -> Tensor:
    data = a.data - b.data

    def backward(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(-g, b.data.shape)

    return Tensor._result(data, "sub", (a, b), backward)


def neg(a: Tensor) -> Tensor:
    return Tensor._result(-a.data, "neg", (a,), lambda g: (-g,))


def mul(a: Tensor, b: Tensor) -> Tensor:
    data = a.data * b.data

    def backward(g):
        return _unbroadcast(g * b.data, a.data.shape), _unbroadcast(g * a.data, b.data.shape)

    return Tensor._result(data, "mul", (a, b), backward)


def div(a: Tensor, b: Tensor) -> Tensor:
    data = a.data / b.data

    def backward(g):
        ga = g / b.data
        gb = -g * data / b.data
        return _unbroadcast(ga, a.data.shape), _unbroadcast(gb, b.data.shape)

    return Tensor._result(data, "div", (a, b), backward)


def pow_const(a: Tensor, p: float) -> Tensor:
    """a ** p for a constant exponent. Non-integer p requires positive base."""
    data = a.data ** p

    def backward(g):
        return (g * p * a.data ** (p - 1.0),)

    return Tensor._result(data, "pow", (a,), backward)


def sqrt(a: Tensor) -> Tensor:
    data = np.sqrt(a.data)

    def backward(g):
        return (g * 0.5 / data,)

    return Tensor._result(data, "sqrt", (a,), backward)


def abs_(a: Tensor) -> Tensor:
    data = np.abs(a.data)

    def backward(g):
        return (g * np.sign(a.data),)

    return Tensor._result(data, "abs", (a,), backward)


def exp(a: Tensor) -> Tensor:
    data = np.exp(a.data)

    def backward(g):
        return (g * data,)

    return Tensor._result(data, "exp", (a,), backward)


def elu(a: Tensor) -> Tensor:
    """max(x, 0) branch plus expm1 on the negative branch; slope 1 at 0."""
    em1 = np.expm1(np.minimum(a.data, 0.0))
    data = np.maximum(a.data, em1)

    def backward(g):
        # derivative is exp(x) for x<=0 and 1 for x>0; em1+1 covers both
        return (g * (em1 + 1.0),)

    return Tensor._result(data, "elu", (a,), backward)


def sin(a: Tensor) -> Tensor:
    data = np.sin(a.data)

    def backward(g):
        return (g * np.cos(a.data),)

    return Tensor._result(data, "sin", (a,), backward)


def cos(a: Tensor) -> Tensor:
    data = np.cos(a.data)

    def backward(g):
        return (g * -np.sin(a.data),)

    return Tensor._result(data, "cos", (a,), backward)


# -- linear algebra --------------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim < 2 or b.data.ndim < 2:
        raise ContractViolation("matmul expects operands with ndim >= 2")
    data = a.data @ b.data

    def backward(g):
        ga = g @ b.data.swapaxes(-1, -2)
        gb = a.data.swapaxes(-1, -2) @ g
        return _unbroadcast(ga, a.data.shape), _unbroadcast(gb, b.data.shape)

    return Tensor._result(data, "matmul", (a, b), backward)


def transpose(a: Tensor, axes: tuple[int, ...] | None = None) -> Tensor:
    data = np.transpose(a.data, axes)
    if axes is None:
        inv = None
    else:
        inv = tuple(np.argsort(axes))

    def backward(g):
        return (np.transpose(g, inv),)

    return Tensor._result(data, "transpose", (a,), backward)


def reshape(a: Tensor, shape) -> Tensor:
    data = a.data.reshape(shape)

    def backward(g):
        return (g.reshape(a.data.shape),)

    return Tensor._result(data, "reshape", (a,), backward)


def diag_part(a: Tensor) -> Tensor:
    """Main diagonal of a square matrix as a 1-D tensor."""
    if a.data.ndim != 2 or a.data.shape[0] != a.data.shape[1]:
        raise ContractViolation("diag_part expects a square matrix")
    data = np.ascontiguousarray(np.diagonal(a.data))

    def backward(g):
        out = np.zeros_like(a.data)
        np.fill_diagonal(out, g)
        return (out,)

    return Tensor._result(data, "diag_part", (a,), backward)


# -- reductions -------------------------------------------------------------------


def sum_(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    data = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        g = np.asarray(g)
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.data.shape).copy(),)

    return Tensor._result(np.asarray(data), "sum", (a,), backward)


def mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    n = a.data.size if axis is None else a.data.shape[axis]
    data = a.data.mean(axis=axis, keepdims=keepdims)

    def backward(g):
        g = np.asarray(g) / n
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.data.shape).copy(),)

    return Tensor._result(np.asarray(data), "mean", (a,), backward)


# -- structure ops ------------------------------------------------------------------


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = [_as_tensor(t) for t in tensors]
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]

    def backward(g):
        return tuple(np.split(g, np.cumsum(sizes)[:-1], axis=axis))

    return Tensor._result(data, "concat", tensors, backward)


def getitem(a: Tensor, key) -> Tensor:
    """Basic indexing only (ints, slices, tuples of those). Rows by index
    array go through take_rows, which has a duplicate-safe backward."""
    data = a.data[key]

    def backward(g):
        out = np.zeros_like(a.data)
        out[key] += g
        return (out,)

    return Tensor._result(np.asarray(data), "slice", (a,), backward)


def _scatter_sum(idx: np.ndarray, values: np.ndarray, nrows: int) -> np.ndarray:
    """Sum rows of `values` into `nrows` bins given by idx (duplicates add)."""
    if values.ndim == 1:
        return np.bincount(idx, weights=values, minlength=nrows)
    ncol = values.shape[1]
    flat = (idx[:, None] * ncol + np.arange(ncol)).ravel()
    out = np.bincount(flat, weights=values.ravel(), minlength=nrows * ncol)
    return out.reshape(nrows, ncol)


def take_rows(a: Tensor, idx: np.ndarray) -> Tensor:
    """Gather rows a[idx] along the first axis; backward scatter-adds."""
    idx = np.asarray(idx, dtype=np.intp)
    data = a.data[idx]
    nrows = a.data.shape[0]

    def backward(g):
        return (_scatter_sum(idx, g, nrows).reshape(a.data.shape),)

    return Tensor._result(data, "take_rows", (a,), backward)


def scatter_rows(values: Tensor, idx: np.ndarray, nrows: int) -> Tensor:
    """out[k] = sum of values rows e with idx[e] == k; inverse of take_rows."""
    idx = np.asarray(idx, dtype=np.intp)
    data = _scatter_sum(idx, values.data, nrows)

    def backward(g):
        return (g[idx],)

    return Tensor._result(data, "scatter_rows", (values,), backward)


def softmax_rows(a: Tensor) -> Tensor:
    """Softmax along the last axis, numerically stabilized."""
    shifted = a.data - a.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    data = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        dot = (g * data).sum(axis=-1, keepdims=True)
        return (data * (g - dot),)

    return Tensor._result(data, "softmax_rows", (a,), backward)


# -- backward pass --------------------------------------------------------------------


def _topo_order(root: Tensor) -> list[Tensor]:
    """Iterative post-order over the recorded graph (no recursion limit)."""
    order: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in visited:
                stack.append((p, False))
    return order


def backward(root: Tensor) -> None:
    """Accumulate d(root)/d(leaf) into .grad of every reachable tensor that
    requires gradients. root must be scalar (size 1)."""
    if root.data.size != 1:
        raise ContractViolation(f"backward root must be scalar, got shape {root.data.shape}")
    if not root.requires_grad:
        raise ContractViolation("backward root does not depend on any tracked parameter")
    order = _topo_order(root)
    root.grad = np.ones_like(root.data)
    for node in reversed(order):
        if node._backward is None:
            continue
        g = node.grad
        if g is None:
            continue
        if math.isnan(float(np.sum(g))):
            raise NumericFailure("NaN gradient during backward", node=node.op)
        parent_grads = node._backward(g)
        for p, pg in zip(node._parents, parent_grads):
            if pg is None or not p.requires_grad:
                continue
            if p.grad is None:
                p.grad = pg if pg.base is None and pg is not g else pg.copy()
            else:
                p.grad += pg


def zero_grads(params: Iterable[Tensor]) -> None:
    for p in params:
        p.grad = None
