"""Feature pyramids and deformable alignment.

Three alignment variants share one interface ``f(source_pyr, ref_pyr, params)``
and return the source's level-0 feature aligned toward the reference:

* :func:`cspa` – coarse-to-fine cross-scale pyramid alignment (Model-3),
* :func:`align_model1` – a single alignment block at full resolution,
* :func:`align_model2` – all-pairs cost-volume attention from the full-resolution
  source to every reference level, quadratic in the pixel count.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autograd import DTYPE, Tensor, as_tensor, channel_slice, concat, make_op, relu
from .counter import tally
from .errors import MemoryGuardError, ShapeError
from .ops import (
    ConvParams,
    ConvSpec,
    ResBlockParams,
    _bilinear_setup,
    conv,
    init_conv,
    init_res_block,
    res_block,
    sampling_matrix,
    upsample,
)

TAPS = 9


@dataclass
class FeaturePyramid:
    level0: Tensor
    level1: Tensor
    level2: Tensor

    @property
    def levels(self) -> tuple[Tensor, Tensor, Tensor]:
        return (self.level0, self.level1, self.level2)

    @property
    def channels(self) -> int:
        return self.level0.channels


@dataclass
class ExtractionParams:
    head: ConvParams
    blocks: list[ResBlockParams]
    down1: ConvParams
    down2: ConvParams


@dataclass
class AlignBlockParams:
    entry: ConvParams
    blocks: list[ResBlockParams]
    head: ConvParams


@dataclass
class CSPAParams:
    level2: AlignBlockParams
    level1: AlignBlockParams
    level0: AlignBlockParams
    csf1: ConvParams  # 2C -> C
    csf0: ConvParams  # 3C -> C


@dataclass
class Model1Params:
    block: AlignBlockParams


@dataclass
class Model2Params:
    csf: ConvParams  # 3C -> C over the three attention outputs
    temperature: float = 1.0
    max_cost_volume: int = 2**28
    chunk: int = 2**22


# ---------------------------------------------------------------------------
# construction


def extraction_specs(channels: int, n_blocks: int = 5, in_channels: int = 3) -> list[ConvSpec]:
    c = channels
    specs = [ConvSpec(in_channels, c, 3, 1)]
    specs += [ConvSpec(c, c, 3, 1)] * (2 * n_blocks)
    specs += [ConvSpec(c, c, 3, 2), ConvSpec(c, c, 3, 2)]
    return specs


def align_block_specs(channels: int, n_blocks: int = 5, taps: int = TAPS) -> list[ConvSpec]:
    c = channels
    return [ConvSpec(2 * c, c)] + [ConvSpec(c, c)] * (2 * n_blocks) + [ConvSpec(c, 3 * taps)]


def cspa_specs(channels: int, n_blocks: int = 5) -> list[ConvSpec]:
    c = channels
    return align_block_specs(c, n_blocks) * 3 + [ConvSpec(2 * c, c), ConvSpec(3 * c, c)]


def init_extraction(channels: int, n_blocks: int, rng: np.random.Generator) -> ExtractionParams:
    c = channels
    return ExtractionParams(
        head=init_conv(ConvSpec(3, c), rng),
        blocks=[init_res_block(c, rng) for _ in range(n_blocks)],
        down1=init_conv(ConvSpec(c, c, 3, 2), rng),
        down2=init_conv(ConvSpec(c, c, 3, 2), rng),
    )


def identity_head(channels: int, taps: int = TAPS) -> ConvParams:
    """Zero-weight head whose bias puts weight 1 on the centre tap and 0 offsets."""
    w = np.zeros((3 * taps, channels, 3, 3))
    b = np.zeros(3 * taps)
    b[taps // 2] = 1.0
    return ConvParams(Tensor(w, requires_grad=True), Tensor(b, requires_grad=True), 1)


def init_align_block(channels: int, n_blocks: int, rng: np.random.Generator) -> AlignBlockParams:
    c = channels
    return AlignBlockParams(
        entry=init_conv(ConvSpec(2 * c, c), rng),
        blocks=[init_res_block(c, rng) for _ in range(n_blocks)],
        head=identity_head(c),
    )


def init_cspa(channels: int, n_blocks: int, rng: np.random.Generator) -> CSPAParams:
    c = channels
    return CSPAParams(
        level2=init_align_block(c, n_blocks, rng),
        level1=init_align_block(c, n_blocks, rng),
        level0=init_align_block(c, n_blocks, rng),
        csf1=init_conv(ConvSpec(2 * c, c), rng, gain=np.sqrt(0.5)),
        csf0=init_conv(ConvSpec(3 * c, c), rng, gain=np.sqrt(0.5)),
    )


def passthrough_conv(in_channels: int, out_channels: int, start: int) -> ConvParams:
    """3x3 conv copying input channels ``start:start+out_channels`` unchanged."""
    w = np.zeros((out_channels, in_channels, 3, 3))
    for i in range(out_channels):
        w[i, start + i, 1, 1] = 1.0
    return ConvParams(Tensor(w, requires_grad=True), Tensor(np.zeros(out_channels), requires_grad=True), 1)


# ---------------------------------------------------------------------------
# operators


def extract_pyramid(image: Tensor, params: ExtractionParams) -> FeaturePyramid:
    image = as_tensor(image)
    if image.data.ndim != 3 or image.channels != params.head.spec.in_channels:
        raise ShapeError("extract_pyramid", "channels", params.head.spec.in_channels, image.shape)
    f = relu(conv(image, params.head))
    for rb in params.blocks:
        f = res_block(f, rb)
    f1 = relu(conv(f, params.down1))
    f2 = relu(conv(f1, params.down2))
    return FeaturePyramid(f, f1, f2)


def tap_grid(taps: int = TAPS) -> np.ndarray:
    """Canonical ``(taps, 2)`` tap displacements, raster order over a square."""
    k = int(round(np.sqrt(taps)))
    if k * k != taps or k % 2 == 0:
        raise ShapeError("tap_grid", "taps", "odd square", taps)
    r = k // 2
    return np.array([(dy, dx) for dy in range(-r, r + 1) for dx in range(-r, r + 1)], dtype=DTYPE)


def deformable_aggregate(source: Tensor, offsets: Tensor, weights: Tensor) -> Tensor:
    """``out(x) = sum_i W_i(x) * source(x + p_i + O_i(x))`` per channel.

    ``offsets`` holds ``(dy_i, dx_i)`` at channels ``2i, 2i+1``; ``p_i`` is the
    canonical 3x3 tap grid, so zero offsets give an adaptive 3x3 convolution.
    """
    source, offsets, weights = as_tensor(source), as_tensor(offsets), as_tensor(weights)
    c, h, w = source.shape
    t = weights.channels
    if weights.shape[1:] != (h, w):
        raise ShapeError("deformable_aggregate", "weight field size", (h, w), weights.shape[1:])
    if offsets.shape != (2 * t, h, w):
        raise ShapeError("deformable_aggregate", "offset channels", (2 * t, h, w), offsets.shape)
    grid = tap_grid(t)
    ys, xs = np.mgrid[0:h, 0:w].astype(DTYPE)
    off = offsets.data.reshape(t, 2, h, w)
    py = ys[None] + grid[:, 0, None, None] + off[:, 0]
    px = xs[None] + grid[:, 1, None, None] + off[:, 1]
    y0, x0, y1, x1, fy, fx, in_y, in_x = _bilinear_setup(py, px, h, w)
    src = source.data.reshape(c, h * w)
    v00, v01 = src[:, y0 * w + x0], src[:, y0 * w + x1]
    v10, v11 = src[:, y1 * w + x0], src[:, y1 * w + x1]
    sampled = (1 - fy) * ((1 - fx) * v00 + fx * v01) + fy * ((1 - fx) * v10 + fx * v11)
    out = np.einsum("cthw,thw->chw", sampled, weights.data)
    tally("deformable", 5 * c * t * h * w)

    def _back(g):
        gw = np.einsum("chw,cthw->thw", g, sampled) if weights.requires_grad else None
        gs = g[:, None] * weights.data[None]
        go = None
        if offsets.requires_grad:
            dvy = (1 - fx) * (v10 - v00) + fx * (v11 - v01)
            dvx = (1 - fy) * (v01 - v00) + fy * (v11 - v10)
            go = np.stack([(gs * dvy).sum(axis=0) * in_y, (gs * dvx).sum(axis=0) * in_x], axis=1)
            go = go.reshape(2 * t, h, w)
        gsrc = None
        if source.requires_grad:
            a = sampling_matrix(py, px, h, w)
            gsrc = np.asarray((a.T @ gs.reshape(c, t * h * w).T).T).reshape(c, h, w)
        return gsrc, go, gw

    return make_op(out, (source, offsets, weights), _back)


def align_block(source: Tensor, reference: Tensor, params: AlignBlockParams) -> Tensor:
    """Predict per-pixel tap weights/offsets from both features and resample the source."""
    if source.shape != reference.shape:
        raise ShapeError("align_block", "shape", source.shape, reference.shape)
    f = conv(concat([source, reference]), params.entry)
    for rb in params.blocks:
        f = res_block(f, rb)
    head = conv(f, params.head)
    t = head.channels // 3
    weights = channel_slice(head, 0, t)
    offsets = channel_slice(head, t, 3 * t)
    return deformable_aggregate(source, offsets, weights)


def _check_pyramids(op: str, a: FeaturePyramid, b: FeaturePyramid) -> None:
    for la, lb in zip(a.levels, b.levels):
        if la.shape != lb.shape:
            raise ShapeError(op, "pyramid level", la.shape, lb.shape)


def cspa(source_pyr: FeaturePyramid, ref_pyr: FeaturePyramid, params: CSPAParams) -> Tensor:
    """Coarse-to-fine alignment; each finer level fuses upsampled coarser results first."""
    _check_pyramids("cspa", source_pyr, ref_pyr)
    s0, s1, s2 = source_pyr.levels
    r0, r1, r2 = ref_pyr.levels
    a2 = align_block(s2, r2, params.level2)
    fused1 = conv(concat([upsample(a2, 2, s1.shape[1:]), s1]), params.csf1)
    a1 = align_block(fused1, r1, params.level1)
    fused0 = conv(
        concat([upsample(a2, 4, s0.shape[1:]), upsample(a1, 2, s0.shape[1:]), s0]),
        params.csf0,
    )
    return align_block(fused0, r0, params.level0)


def align_model1(source_pyr: FeaturePyramid, ref_pyr: FeaturePyramid, params: Model1Params) -> Tensor:
    _check_pyramids("align_model1", source_pyr, ref_pyr)
    return align_block(source_pyr.level0, ref_pyr.level0, params.block)


def _softmax_rows(s: np.ndarray) -> np.ndarray:
    s = s - s.max(axis=1, keepdims=True)
    np.exp(s, out=s)
    s /= s.sum(axis=1, keepdims=True)
    return s


def cost_volume_attention(query: Tensor, key: Tensor, value: Tensor, temperature: float = 1.0,
                          chunk: int = 2**22) -> Tensor:
    """``out[:, n] = sum_m softmax_m(tau <q_n, k_m>) v[:, m]`` on flattened grids.

    ``query`` is ``(C, N)``, ``key``/``value`` are ``(C, M)``.  The N x M
    correlation is processed in row chunks of at most ``chunk`` entries.
    """
    q, k, v = query.data, key.data, value.data
    c, n = q.shape
    m = k.shape[1]
    rows = max(1, chunk // max(m, 1))
    out = np.empty((v.shape[0], n), dtype=q.dtype)
    for s in range(0, n, rows):
        p = _softmax_rows(temperature * (q[:, s : s + rows].T @ k))
        out[:, s : s + rows] = v @ p.T
    tally("cost_volume", n * m * (c + v.shape[0]))

    def _back(g):
        gq = np.zeros_like(q)
        gk = np.zeros_like(k)
        gv = np.zeros_like(v)
        for s in range(0, n, rows):
            sl = slice(s, s + rows)
            p = _softmax_rows(temperature * (q[:, sl].T @ k))
            gv += g[:, sl] @ p
            gp = g[:, sl].T @ v
            gsc = p * (gp - (gp * p).sum(axis=1, keepdims=True))
            gq[:, sl] = temperature * (k @ gsc.T)
            gk += temperature * (q[:, sl] @ gsc)
        return gq, gk, gv

    return make_op(out, (query, key, value), _back)


def _flatten(x: Tensor) -> Tensor:
    c, h, w = x.shape
    return make_op(x.data.reshape(c, h * w), (x,), lambda g: (g.reshape(c, h, w),))


def _unflatten(x: Tensor, h: int, w: int) -> Tensor:
    c = x.shape[0]
    return make_op(x.data.reshape(c, h, w), (x,), lambda g: (g.reshape(c, h * w),))


def align_model2(source_pyr: FeaturePyramid, ref_pyr: FeaturePyramid, params: Model2Params) -> Tensor:
    """Cross-scale cost-volume alignment: full-resolution queries attend to every reference level."""
    _check_pyramids("align_model2", source_pyr, ref_pyr)
    s0 = source_pyr.level0
    c, h, w = s0.shape
    n = h * w
    volume = n * sum(l.height * l.width for l in ref_pyr.levels)
    if volume > params.max_cost_volume:
        raise MemoryGuardError(
            f"cost volume of {volume} entries exceeds cap {params.max_cost_volume} (N={n})"
        )
    q = _flatten(s0)
    outs = []
    for ref in ref_pyr.levels:
        kv = _flatten(ref)
        att = cost_volume_attention(q, kv, kv, params.temperature, params.chunk)
        outs.append(_unflatten(att, h, w))
    return conv(concat(outs), params.csf)


def init_model2(channels: int, rng: np.random.Generator, temperature: float | None = None) -> Model2Params:
    t = 1.0 / np.sqrt(channels) if temperature is None else temperature
    return Model2Params(csf=init_conv(ConvSpec(3 * channels, channels), rng, gain=np.sqrt(0.5)), temperature=t)


def random_pyramid(channels: int, h: int, w: int, rng: np.random.Generator, dtype=DTYPE) -> FeaturePyramid:
    """Synthetic pyramid with the extraction module's level sizes."""
    h1, w1 = -(-h // 2), -(-w // 2)
    h2, w2 = -(-h1 // 2), -(-w1 // 2)
    levels = [Tensor(rng.standard_normal((channels, a, b)).astype(dtype)) for a, b in ((h, w), (h1, w1), (h2, w2))]
    return FeaturePyramid(*levels)
