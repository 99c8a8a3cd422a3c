"""Convolution, residual blocks and bilinear sampling on ``(C, H, W)`` tensors.

Padding is replicate-edge everywhere and a stride-``s`` convolution maps
``n`` pixels to ``ceil(n / s)``.  Sampling outside the grid clamps to the
edge.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .autograd import DTYPE, Tensor, add, as_tensor, make_op, relu
from .counter import tally
from .errors import ShapeError


@dataclass(frozen=True)
class ConvSpec:
    in_channels: int
    out_channels: int
    kernel: int = 3
    stride: int = 1
    bias: bool = True

    @property
    def param_count(self) -> int:
        return self.in_channels * self.out_channels * self.kernel**2 + (self.out_channels if self.bias else 0)

    def output_size(self, h: int, w: int) -> tuple[int, int]:
        return -(-h // self.stride), -(-w // self.stride)


@dataclass
class ConvParams:
    weight: Tensor
    bias: Tensor | None = None
    stride: int = 1

    @property
    def spec(self) -> ConvSpec:
        o, i, k, _ = self.weight.shape
        return ConvSpec(i, o, k, self.stride, self.bias is not None)


@dataclass
class ResBlockParams:
    conv1: ConvParams
    conv2: ConvParams

    @property
    def channels(self) -> int:
        return self.conv1.spec.in_channels


def init_conv(spec: ConvSpec, rng: np.random.Generator, gain: float = 1.0) -> ConvParams:
    """Kaiming fan-in normal weights, zero bias."""
    fan_in = spec.in_channels * spec.kernel**2
    std = gain * np.sqrt(2.0 / fan_in)
    w = rng.standard_normal((spec.out_channels, spec.in_channels, spec.kernel, spec.kernel)) * std
    b = Tensor(np.zeros(spec.out_channels), requires_grad=True) if spec.bias else None
    return ConvParams(Tensor(w, requires_grad=True), b, spec.stride)


def zero_conv(spec: ConvSpec) -> ConvParams:
    w = Tensor(np.zeros((spec.out_channels, spec.in_channels, spec.kernel, spec.kernel)), requires_grad=True)
    b = Tensor(np.zeros(spec.out_channels), requires_grad=True) if spec.bias else None
    return ConvParams(w, b, spec.stride)


def init_res_block(channels: int, rng: np.random.Generator, residual_gain: float = 0.1) -> ResBlockParams:
    # small second conv keeps deep residual stacks near identity at start
    spec = ConvSpec(channels, channels, 3, 1, True)
    return ResBlockParams(init_conv(spec, rng), init_conv(spec, rng, gain=residual_gain))


# ---------------------------------------------------------------------------
# convolution


def _fold_replicate(gp: np.ndarray, p: int, h: int, w: int) -> np.ndarray:
    """Adjoint of replicate padding by ``p`` on both spatial axes."""
    if p == 0:
        return gp
    rows = gp[:, p : p + h, :].copy()
    rows[:, 0, :] += gp[:, :p, :].sum(axis=1)
    rows[:, -1, :] += gp[:, p + h :, :].sum(axis=1)
    out = rows[:, :, p : p + w].copy()
    out[:, :, 0] += rows[:, :, :p].sum(axis=2)
    out[:, :, -1] += rows[:, :, p + w :].sum(axis=2)
    return out


def conv2d(x: Tensor, weight: Tensor, bias: Tensor | None = None, stride: int = 1) -> Tensor:
    """2-D cross-correlation with replicate padding; output ``ceil(n / stride)``."""
    x, weight = as_tensor(x), as_tensor(weight)
    if x.data.ndim != 3:
        raise ShapeError("conv2d", "input rank", 3, x.data.ndim)
    if weight.data.ndim != 4 or weight.shape[2] != weight.shape[3] or weight.shape[2] % 2 == 0:
        raise ShapeError("conv2d", "kernel", "(out, in, k, k) with odd k", weight.shape)
    c, h, w = x.shape
    o, ci, k, _ = weight.shape
    if ci != c:
        raise ShapeError("conv2d", "in_channels", ci, c)
    if bias is not None and bias.shape != (o,):
        raise ShapeError("conv2d", "out_channels", (o,), bias.shape)
    if stride < 1:
        raise ShapeError("conv2d", "stride", ">=1", stride)
    p = k // 2
    ho, wo = -(-h // stride), -(-w // stride)
    xp = np.pad(x.data, ((0, 0), (p, p), (p, p)), mode="edge") if p else x.data
    span_y, span_x = stride * (ho - 1) + 1, stride * (wo - 1) + 1
    cols = np.empty((c, k, k, ho, wo), dtype=x.data.dtype)
    for ky in range(k):
        for kx in range(k):
            cols[:, ky, kx] = xp[:, ky : ky + span_y : stride, kx : kx + span_x : stride]
    cols = cols.reshape(c * k * k, ho * wo)
    w2 = weight.data.reshape(o, c * k * k)
    out = w2 @ cols
    if bias is not None:
        out += bias.data[:, None]
    tally("conv2d", o * c * k * k * ho * wo)

    def _back(g):
        g2 = g.reshape(o, ho * wo)
        gw = (g2 @ cols.T).reshape(weight.shape) if weight.requires_grad else None
        gb = g2.sum(axis=1) if bias is not None and bias.requires_grad else None
        gx = None
        if x.requires_grad:
            gcols = (w2.T @ g2).reshape(c, k, k, ho, wo)
            gp = np.zeros_like(xp)
            for ky in range(k):
                for kx in range(k):
                    gp[:, ky : ky + span_y : stride, kx : kx + span_x : stride] += gcols[:, ky, kx]
            gx = _fold_replicate(gp, p, h, w)
        return (gx, gw) if bias is None else (gx, gw, gb)

    parents = (x, weight) if bias is None else (x, weight, bias)
    return make_op(out.reshape(o, ho, wo), parents, _back)


def conv(x: Tensor, params: ConvParams) -> Tensor:
    return conv2d(x, params.weight, params.bias, params.stride)


def res_block(x: Tensor, params: ResBlockParams) -> Tensor:
    """``x + conv2(relu(conv1(x)))``."""
    if x.channels != params.channels:
        raise ShapeError("res_block", "channels", params.channels, x.channels)
    return add(x, conv(relu(conv(x, params.conv1)), params.conv2))


# ---------------------------------------------------------------------------
# bilinear sampling


def _bilinear_setup(py: np.ndarray, px: np.ndarray, h: int, w: int):
    """Clamp-to-edge bilinear corners and weights for arrays of coordinates.

    On integer lattice lines the cell ``[floor, floor + 1]`` is used, which
    fixes the one-sided coordinate derivative there.
    """
    cy = np.clip(py, 0.0, h - 1)
    cx = np.clip(px, 0.0, w - 1)
    y0 = np.floor(cy).astype(np.int64)
    x0 = np.floor(cx).astype(np.int64)
    fy = cy - y0
    fx = cx - x0
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    # coordinate derivative vanishes where clamping is active
    in_y = ((py >= 0) & (py <= h - 1)).astype(DTYPE)
    in_x = ((px >= 0) & (px <= w - 1)).astype(DTYPE)
    return y0, x0, y1, x1, fy, fx, in_y, in_x


def bilinear_sample(source: Tensor, y, x, c: int) -> Tensor:
    """Interpolated value of channel ``c`` at fractional ``(y, x)``.

    ``y`` and ``x`` may be plain floats or scalar tensors; the result is a
    scalar tensor differentiable in the source values and the coordinates.
    """
    source = as_tensor(source)
    yt, xt = as_tensor(y), as_tensor(x)
    _, h, w = source.shape
    y0, x0, y1, x1, fy, fx, in_y, in_x = _bilinear_setup(yt.data, xt.data, h, w)
    v = source.data[c]
    v00, v01, v10, v11 = v[y0, x0], v[y0, x1], v[y1, x0], v[y1, x1]
    val = (1 - fy) * ((1 - fx) * v00 + fx * v01) + fy * ((1 - fx) * v10 + fx * v11)

    def _back(g):
        gs = None
        if source.requires_grad:
            gs = np.zeros_like(source.data)
            np.add.at(gs[c], (y0, x0), g * (1 - fy) * (1 - fx))
            np.add.at(gs[c], (y0, x1), g * (1 - fy) * fx)
            np.add.at(gs[c], (y1, x0), g * fy * (1 - fx))
            np.add.at(gs[c], (y1, x1), g * fy * fx)
        gy = g * in_y * ((1 - fx) * (v10 - v00) + fx * (v11 - v01))
        gx = g * in_x * ((1 - fy) * (v01 - v00) + fy * (v11 - v10))
        return gs, np.asarray(gy, dtype=DTYPE), np.asarray(gx, dtype=DTYPE)

    return make_op(np.asarray(val, dtype=DTYPE), (source, yt, xt), _back)


def sampling_matrix(py: np.ndarray, px: np.ndarray, h: int, w: int) -> sp.csr_matrix:
    """Sparse ``(len(py), h*w)`` operator performing clamp-to-edge bilinear reads."""
    y0, x0, y1, x1, fy, fx, _, _ = _bilinear_setup(py.ravel(), px.ravel(), h, w)
    n = y0.size
    rows = np.repeat(np.arange(n), 4)
    cols = np.stack([y0 * w + x0, y0 * w + x1, y1 * w + x0, y1 * w + x1], axis=1).ravel()
    vals = np.stack([(1 - fy) * (1 - fx), (1 - fy) * fx, fy * (1 - fx), fy * fx], axis=1).ravel()
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, h * w))


def _resize_matrix(n_in: int, n_out: int, factor: float) -> np.ndarray:
    # half-pixel centres: output i reads input (i + 0.5) / factor - 0.5
    src = np.clip((np.arange(n_out) + 0.5) / factor - 0.5, 0.0, n_in - 1)
    i0 = np.floor(src).astype(np.int64)
    i1 = np.minimum(i0 + 1, n_in - 1)
    f = src - i0
    m = np.zeros((n_out, n_in))
    np.add.at(m, (np.arange(n_out), i0), 1 - f)
    np.add.at(m, (np.arange(n_out), i1), f)
    return m


def upsample(x: Tensor, factor: int, size: tuple[int, int] | None = None) -> Tensor:
    """Bilinear upsampling by ``factor``, optionally cropped/extended to ``size``.

    ``size`` lets odd-sized pyramid levels line up: a 12-pixel level upsampled
    by 4 onto a 47-pixel grid keeps the nominal scale ``factor``.
    """
    c, h, w = x.shape
    ho, wo = size if size is not None else (h * factor, w * factor)
    ay = _resize_matrix(h, ho, factor)
    ax = _resize_matrix(w, wo, factor)
    out = np.einsum("ij,cjk,lk->cil", ay, x.data, ax, optimize=True)
    tally("upsample", 4 * c * ho * wo)

    def _back(g):
        return (np.einsum("ij,cil,lk->cjk", ay, g, ax, optimize=True),)

    return make_op(out, (x,), _back)
