"""Central finite-difference checks of reverse-mode gradients."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .autograd import Tensor, backward, make_op


@dataclass
class Probe:
    tensor: int
    index: tuple[int, ...]
    analytic: float
    numeric: float

    @property
    def rel_error(self) -> float:
        denom = max(abs(self.analytic), abs(self.numeric), 1e-7)
        return abs(self.analytic - self.numeric) / denom


def project(out: Tensor, direction: np.ndarray) -> Tensor:
    """Scalar ``<out, direction>`` so that vector-valued ops can be checked."""
    return make_op(np.array((out.data * direction).sum()), (out,), lambda g: (g * direction,))


def check_gradients(
    fn: Callable[[], Tensor],
    tensors: Sequence[Tensor],
    probes: int = 20,
    h: float = 1e-5,
    rng: np.random.Generator | None = None,
) -> list[Probe]:
    """Compare analytic and central-difference derivatives of scalar ``fn()``.

    Probe locations are drawn uniformly over all entries of ``tensors``;
    each tensor gets at least one probe when ``probes >= len(tensors)``.
    """
    rng = rng or np.random.default_rng(0)
    for t in tensors:
        t.requires_grad = True
        t.grad = None
    out = fn()
    backward(out)
    grads = [np.zeros_like(t.data) if t.grad is None else t.grad.copy() for t in tensors]

    picks = list(range(len(tensors)))[:probes]
    sizes = np.array([t.data.size for t in tensors], dtype=np.float64)
    picks += list(rng.choice(len(tensors), size=probes - len(picks), p=sizes / sizes.sum()))
    results = []
    for ti in picks:
        t = tensors[ti]
        flat = int(rng.integers(t.data.size))
        idx = np.unravel_index(flat, t.data.shape)
        orig = t.data[idx]
        t.data = t.data.copy()
        t.data[idx] = orig + h
        fp = fn().item()
        t.data[idx] = orig - h
        fm = fn().item()
        t.data[idx] = orig
        results.append(Probe(ti, tuple(int(i) for i in idx), float(grads[ti][idx]), (fp - fm) / (2 * h)))
    return results


def max_rel_error(results: Sequence[Probe]) -> float:
    return max(p.rel_error for p in results)
