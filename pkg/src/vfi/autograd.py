"""Minimal reverse-mode differentiation over numpy arrays.

Every value flowing through the network is a :class:`Tensor`.  Images, feature
maps, offset and weight fields are rank-3 ``(channels, height, width)``
tensors (the "grid" layout); conv weights are rank-4.  Operators record a
closure on their output that maps the upstream gradient to one gradient per
parent, and :func:`backward` replays them in reverse topological order.

Only the fixed operator set of this package is supported; there is no
broadcasting and no in-place mutation.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import GradientError, ShapeError

DTYPE = np.float64


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.asarray(data, dtype=DTYPE) if not isinstance(data, np.ndarray) else data
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable | None = None
        self.name = name

    # grid view ---------------------------------------------------------
    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad}{tag})"

    # sugar ---------------------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return scale(self, -1.0)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=DTYPE))


def grid(values, requires_grad: bool = False) -> Tensor:
    """Wrap a ``(C, H, W)`` array; 2-D input is promoted to one channel."""
    arr = np.array(values, dtype=DTYPE)
    if arr.ndim == 2:
        arr = arr[None]
    if arr.ndim != 3:
        raise ShapeError("grid", "rank", 3, arr.ndim)
    return Tensor(arr, requires_grad=requires_grad)


def make_op(data: np.ndarray, parents: Sequence[Tensor], backward: Callable) -> Tensor:
    """Create an op output; the graph is only recorded if some parent needs it.

    ``backward(g)`` must return one gradient (or ``None``) per parent.
    """
    out = Tensor(data)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


def _topo_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def backward(output: Tensor, output_grad=None) -> None:
    """Accumulate d(output)/d(leaf) into ``leaf.grad`` for every leaf needing it.

    Intermediate nodes receive ``.grad`` too.  ``output_grad`` defaults to 1
    for scalar outputs and must match ``output.shape`` otherwise.
    """
    if not output.requires_grad:
        raise GradientError("output does not depend on any tensor requiring grad")
    if output_grad is None:
        if output.data.size != 1:
            raise GradientError("output_grad required for non-scalar output")
        g = np.ones_like(output.data)
    else:
        g = np.asarray(output_grad.data if isinstance(output_grad, Tensor) else output_grad, dtype=DTYPE)
        if g.shape != output.shape:
            raise GradientError(f"output_grad shape {g.shape} != output shape {output.shape}")
    order = _topo_order(output)
    pending: dict[int, np.ndarray] = {id(output): g}
    for node in reversed(order):
        g = pending.pop(id(node), None)
        if g is None:
            continue
        node.grad = g if node.grad is None else node.grad + g
        if node._backward is None:
            continue
        grads = node._backward(g)
        if len(grads) != len(node._parents):
            raise GradientError(f"backward returned {len(grads)} grads for {len(node._parents)} parents")
        for parent, pg in zip(node._parents, grads):
            if pg is None or not parent.requires_grad:
                continue
            if pg.shape != parent.shape:
                raise GradientError(f"gradient shape {pg.shape} != parent shape {parent.shape}")
            key = id(parent)
            pending[key] = pg if key not in pending else pending[key] + pg


def zero_grad(tensors: Iterable[Tensor]) -> None:
    for t in tensors:
        t.grad = None


# ---------------------------------------------------------------------------
# elementwise and structural operators


def _same_shape(op: str, a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape:
        raise ShapeError(op, "shape", a.shape, b.shape)


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _same_shape("add", a, b)
    return make_op(a.data + b.data, (a, b), lambda g: (g, g))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _same_shape("sub", a, b)
    return make_op(a.data - b.data, (a, b), lambda g: (g, -g))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _same_shape("mul", a, b)
    return make_op(a.data * b.data, (a, b), lambda g: (g * b.data, g * a.data))


def scale(a: Tensor, c: float) -> Tensor:
    return make_op(a.data * c, (a,), lambda g: (g * c,))


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return make_op(np.where(mask, x.data, 0.0), (x,), lambda g: (g * mask,))


def sigmoid(x: Tensor) -> Tensor:
    # split by sign so exp never overflows
    d = x.data
    e = np.exp(-np.abs(d))
    s = np.where(d >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    return make_op(s, (x,), lambda g: (g * s * (1.0 - s),))


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    bounds = np.cumsum([0] + sizes)
    data = np.concatenate([t.data for t in tensors], axis=axis)

    def _back(g):
        return tuple(
            np.take(g, np.arange(bounds[i], bounds[i + 1]), axis=axis) for i in range(len(tensors))
        )

    return make_op(data, tensors, _back)


def channel_slice(x: Tensor, start: int, stop: int) -> Tensor:
    if not 0 <= start < stop <= x.shape[0]:
        raise ShapeError("channel_slice", "channels", f"[{start},{stop})", x.shape[0])

    def _back(g):
        full = np.zeros_like(x.data)
        full[start:stop] = g
        return (full,)

    return make_op(x.data[start:stop], (x,), _back)


def total(x: Tensor) -> Tensor:
    return make_op(np.array(x.data.sum()), (x,), lambda g: (np.full_like(x.data, g),))


def mean(x: Tensor) -> Tensor:
    n = x.data.size
    return make_op(np.array(x.data.mean()), (x,), lambda g: (np.full_like(x.data, g / n),))


def mean_abs_diff(x: Tensor, target) -> Tensor:
    """Mean |x - target| with ``target`` held constant; subgradient 0 at ties."""
    t = target.data if isinstance(target, Tensor) else np.asarray(target, dtype=DTYPE)
    if t.shape != x.shape:
        raise ShapeError("mean_abs_diff", "shape", x.shape, t.shape)
    diff = x.data - t
    n = diff.size
    return make_op(np.array(np.abs(diff).mean()), (x,), lambda g: (np.sign(diff) * (g / n),))


def weighted_sum(terms: Sequence[tuple[float, Tensor]]) -> Tensor:
    """Scalar combination ``sum(c_i * t_i)`` of same-shape tensors."""
    coeffs = [c for c, _ in terms]
    ts = [t for _, t in terms]
    for t in ts[1:]:
        _same_shape("weighted_sum", ts[0], t)
    data = sum(c * t.data for c, t in terms)
    return make_op(np.asarray(data, dtype=DTYPE), ts, lambda g: tuple(c * g for c in coeffs))
