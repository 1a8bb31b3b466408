"""Reverse-mode automatic differentiation over numpy float64 arrays.

A ``Tensor`` records its parents and a backward closure; calling
:func:`backward` on a scalar loss walks the implicit tape in reverse
topological order.  Fused operations (LSTM sweeps, CRF losses) in other
modules construct ``Tensor`` nodes directly with their own closures.
"""
from __future__ import annotations

from contextlib import contextmanager
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import GradCheckError, InvalidInputError, ShapeError

_grad_enabled = True


@contextmanager
def no_grad():
    """Disable graph construction; tensors created inside are constants."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, parents=(), backward=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        wants = requires_grad or any(p.requires_grad for p in parents)
        self.requires_grad = wants and _grad_enabled
        self._parents: tuple[Tensor, ...] = tuple(parents) if self.requires_grad else ()
        self._backward: Callable | None = backward if self.requires_grad else None

    @property
    def shape(self):
        return self.data.shape

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, grad={'set' if self.grad is not None else 'none'})"

    def __add__(self, other):
        return add(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __matmul__(self, other):
        return matmul(self, other)


def accumulate(t: Tensor, g: np.ndarray) -> None:
    """Add a gradient contribution to a node (no-op for constants)."""
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


def zero_grads(params: Iterable[Tensor]) -> None:
    for p in params:
        p.grad = None


def _topo_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in visited:
                stack.append((p, False))
    return order


def backward(loss: Tensor, params: Iterable[Tensor] | None = None) -> None:
    """Populate ``grad`` on every node reachable from a scalar loss.

    When ``params`` is given, parameters the loss does not depend on get an
    explicit zero gradient.
    """
    if loss.data.shape != ():
        raise InvalidInputError(f"backward needs a scalar loss, got shape {loss.data.shape}")
    if loss.requires_grad:
        loss.grad = np.asarray(1.0)
        for node in reversed(_topo_order(loss)):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)
    if params is not None:
        for p in params:
            if p.grad is None:
                p.grad = np.zeros_like(p.data)


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    try:
        np.broadcast_shapes(a.data.shape, b.data.shape)
    except ValueError:
        raise ShapeError(f"add: incompatible shapes {a.data.shape} and {b.data.shape}")

    def _bw(g):
        accumulate(a, _unbroadcast(g, a.data.shape))
        accumulate(b, _unbroadcast(g, b.data.shape))

    return Tensor(a.data + b.data, parents=(a, b), backward=_bw)


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    try:
        np.broadcast_shapes(a.data.shape, b.data.shape)
    except ValueError:
        raise ShapeError(f"mul: incompatible shapes {a.data.shape} and {b.data.shape}")

    def _bw(g):
        accumulate(a, _unbroadcast(g * b.data, a.data.shape))
        accumulate(b, _unbroadcast(g * a.data, b.data.shape))

    return Tensor(a.data * b.data, parents=(a, b), backward=_bw)


def scale(x: Tensor, c) -> Tensor:
    """Multiply by a constant scalar or array (no gradient into ``c``)."""
    c = np.asarray(c, dtype=np.float64)

    def _bw(g):
        accumulate(x, _unbroadcast(g * c, x.data.shape))

    return Tensor(x.data * c, parents=(x,), backward=_bw)


def add_scalar(x: Tensor, c: float) -> Tensor:
    def _bw(g):
        accumulate(x, g)

    return Tensor(x.data + c, parents=(x,), backward=_bw)


def neg(x: Tensor) -> Tensor:
    return scale(x, -1.0)


def matmul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    ad, bd = a.data, b.data
    if ad.ndim == 2 and bd.ndim == 2:
        if ad.shape[1] != bd.shape[0]:
            raise ShapeError(f"matmul: {ad.shape} @ {bd.shape}")

        def _bw(g):
            accumulate(a, g @ bd.T)
            accumulate(b, ad.T @ g)

    elif ad.ndim == 2 and bd.ndim == 1:
        if ad.shape[1] != bd.shape[0]:
            raise ShapeError(f"matmul: {ad.shape} @ {bd.shape}")

        def _bw(g):
            accumulate(a, np.outer(g, bd))
            accumulate(b, ad.T @ g)

    elif ad.ndim == 1 and bd.ndim == 2:
        if ad.shape[0] != bd.shape[0]:
            raise ShapeError(f"matmul: {ad.shape} @ {bd.shape}")

        def _bw(g):
            accumulate(a, bd @ g)
            accumulate(b, np.outer(ad, g))

    else:
        raise ShapeError(f"matmul: unsupported ranks {ad.shape} @ {bd.shape}")
    return Tensor(ad @ bd, parents=(a, b), backward=_bw)


def transpose(x: Tensor) -> Tensor:
    def _bw(g):
        accumulate(x, g.T)

    return Tensor(x.data.T, parents=(x,), backward=_bw)


def concat(parts: Sequence[Tensor], axis: int = 0) -> Tensor:
    parts = [_as_tensor(p) for p in parts]
    if not parts:
        raise InvalidInputError("concat of no tensors")
    sizes = [p.data.shape[axis] for p in parts]
    offsets = np.cumsum([0] + sizes)

    def _bw(g):
        for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            index = [slice(None)] * g.ndim
            index[axis] = slice(lo, hi)
            accumulate(p, g[tuple(index)])

    return Tensor(np.concatenate([p.data for p in parts], axis=axis), parents=tuple(parts), backward=_bw)


def narrow(x: Tensor, axis: int, start: int, length: int) -> Tensor:
    """Contiguous slice along one axis."""
    index = [slice(None)] * x.data.ndim
    index[axis] = slice(start, start + length)
    index = tuple(index)

    def _bw(g):
        full = np.zeros_like(x.data)
        full[index] = g
        accumulate(x, full)

    return Tensor(x.data[index].copy(), parents=(x,), backward=_bw)


def tanh(x: Tensor) -> Tensor:
    y = np.tanh(x.data)

    def _bw(g):
        accumulate(x, g * (1.0 - y * y))

    return Tensor(y, parents=(x,), backward=_bw)


def sigmoid(x: Tensor) -> Tensor:
    y = 1.0 / (1.0 + np.exp(-x.data))

    def _bw(g):
        accumulate(x, g * y * (1.0 - y))

    return Tensor(y, parents=(x,), backward=_bw)


def exp(x: Tensor) -> Tensor:
    y = np.exp(x.data)

    def _bw(g):
        accumulate(x, g * y)

    return Tensor(y, parents=(x,), backward=_bw)


def log(x: Tensor) -> Tensor:
    def _bw(g):
        accumulate(x, g / x.data)

    return Tensor(np.log(x.data), parents=(x,), backward=_bw)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)

    def _bw(g):
        dot = (g * y).sum(axis=axis, keepdims=True)
        accumulate(x, (g - dot) * y)

    return Tensor(y, parents=(x,), backward=_bw)


def dropout(x: Tensor, mask: np.ndarray, rate: float) -> Tensor:
    """Inverted dropout with a caller-supplied 0/1 mask."""
    if not 0.0 <= rate < 1.0:
        raise InvalidInputError("dropout rate must lie in [0, 1)")
    factor = mask / (1.0 - rate)

    def _bw(g):
        accumulate(x, g * factor)

    return Tensor(x.data * factor, parents=(x,), backward=_bw)


def gather_rows(table: Tensor, ids: np.ndarray) -> Tensor:
    """Row lookup (embedding gather); backward scatter-adds."""
    ids = np.asarray(ids, dtype=np.int64)
    rows = table.data.shape[0]
    if ids.size and (ids.min() < 0 or ids.max() >= rows):
        raise InvalidInputError(
            f"gather id out of range for table with {rows} rows"
        )

    def _bw(g):
        if not table.requires_grad:
            return
        if table.grad is None:
            table.grad = np.zeros_like(table.data)
        np.add.at(table.grad, ids, g)

    return Tensor(table.data[ids], parents=(table,), backward=_bw)


def sum_(x: Tensor, axis: int | None = None) -> Tensor:
    def _bw(g):
        if axis is None:
            accumulate(x, np.broadcast_to(g, x.data.shape).copy())
        else:
            accumulate(x, np.broadcast_to(np.expand_dims(g, axis), x.data.shape).copy())

    return Tensor(x.data.sum(axis=axis), parents=(x,), backward=_bw)


def mean_(x: Tensor, axis: int | None = None) -> Tensor:
    count = x.data.size if axis is None else x.data.shape[axis]
    return scale(sum_(x, axis=axis), 1.0 / count)


def finite_diff_check(
    fn: Callable[[], Tensor], params: Sequence[Tensor], eps: float = 1e-5
) -> float:
    """Compare analytic gradients of ``fn`` against central differences.

    ``fn`` must be deterministic (fix any dropout masks before calling) and
    must rebuild its graph from ``params`` on every call.  Returns the max
    over parameter elements of |analytic - numeric| / max(1, |numeric|).
    """
    first = fn().data.copy()
    second = fn().data.copy()
    if not np.array_equal(first, second):
        raise GradCheckError("function is not deterministic across calls")

    zero_grads(params)
    out = fn()
    backward(out, params=params)
    analytic = [p.grad.copy() for p in params]

    worst = 0.0
    for p, ana in zip(params, analytic):
        flat = p.data.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            f_plus = float(fn().data)
            flat[i] = orig - eps
            f_minus = float(fn().data)
            flat[i] = orig
            numeric = (f_plus - f_minus) / (2.0 * eps)
            err = abs(ana.reshape(-1)[i] - numeric) / max(1.0, abs(numeric))
            worst = max(worst, err)
    return worst
