"""Census descriptors and windowed exhaustive patch matching.

A descriptor packs eight order comparisons into one byte.  Bit ``n`` follows
the neighbourhood ``(-1,-1), (-1,0), (-1,1), (0,-1), (0,1), (1,-1), (1,0),
(1,1)`` and is 0 iff the centre is strictly brighter than that neighbour.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autograd import DTYPE, Tensor
from .errors import ConfigError, ShapeError

NEIGHBOURS = ((-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1))
LUMA_WEIGHTS = (0.299, 0.587, 0.114)
FRAME_INDICES = (-1, 1)

_POPCOUNT = np.array([bin(i).count("1") for i in range(256)], dtype=np.int64)


@dataclass(frozen=True)
class CensusField:
    bits: np.ndarray  # (H, W) uint8

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def width(self) -> int:
        return self.bits.shape[1]


@dataclass(frozen=True)
class MatchResult:
    """Per query pixel: best ``(row, col)``, frame index in {-1, 1}, distance."""

    pos_y: np.ndarray
    pos_x: np.ndarray
    frame: np.ndarray
    distance: np.ndarray


def _values(x) -> np.ndarray:
    return x.data if isinstance(x, Tensor) else np.asarray(x, dtype=DTYPE)


def luminance(image) -> Tensor:
    """BT.601 luma of a 3-channel image, returned as a 1-channel grid."""
    v = _values(image)
    if v.ndim != 3 or v.shape[0] != 3:
        raise ShapeError("luminance", "channels", 3, v.shape[0] if v.ndim == 3 else v.shape)
    r, g, b = LUMA_WEIGHTS
    return Tensor((r * v[0] + g * v[1] + b * v[2])[None])


def census_transform(lum) -> CensusField:
    v = _values(lum)
    if v.ndim == 3:
        if v.shape[0] != 1:
            raise ShapeError("census_transform", "channels", 1, v.shape[0])
        v = v[0]
    h, w = v.shape
    p = np.pad(v, 1, mode="edge")
    bits = np.zeros((h, w), dtype=np.uint8)
    for n, (dy, dx) in enumerate(NEIGHBOURS):
        neighbour = p[1 + dy : 1 + dy + h, 1 + dx : 1 + dx + w]
        bits |= ((v <= neighbour).astype(np.uint8) << n)
    return CensusField(bits)


def census_patch_distance(a: CensusField, pa, b: CensusField, pb, k: int) -> int:
    """Hamming distance between the KxK descriptor patches centred at ``pa``/``pb``."""
    if k % 2 == 0 or k < 1:
        raise ConfigError(f"patch size must be odd and positive, got {k}")
    r = k // 2
    (ya, xa), (yb, xb) = pa, pb
    qy, qx = np.mgrid[-r : r + 1, -r : r + 1]
    da = a.bits[np.clip(ya + qy, 0, a.height - 1), np.clip(xa + qx, 0, a.width - 1)]
    db = b.bits[np.clip(yb + qy, 0, b.height - 1), np.clip(xb + qx, 0, b.width - 1)]
    return int(_POPCOUNT[da ^ db].sum())


def _check_window(d: int, k: int) -> None:
    if not isinstance(d, (int, np.integer)) or d < 1:
        raise ConfigError(f"maximum displacement must be an integer >= 1, got {d!r}")
    if k % 2 == 0 or k < 1:
        raise ConfigError(f"patch size must be odd and positive, got {k}")


def candidate_order(d: int) -> list[tuple[int, int, int]]:
    """``(frame_index, dy, dx)`` in tie-break priority order.

    Smaller displacement wins first (squared length), then the earlier frame,
    then raster order.  Preferring short displacements means an input frame
    always matches itself, even where census descriptors repeat.
    """
    cands = [(ti, dy, dx) for ti in range(len(FRAME_INDICES)) for dy in range(-d, d + 1) for dx in range(-d, d + 1)]
    return sorted(cands, key=lambda c: (c[1] ** 2 + c[2] ** 2, c[0], c[1], c[2]))


def _windowed_argmin(tap_cost, shape, d: int, k: int, centre_cost=None) -> MatchResult:
    """Exhaustive search shared by the census and RGB matchers.

    ``tap_cost(frame, qy, qx, dy, dx)`` gives, for every query pixel ``x``,
    the cost between the query at ``x + q`` and the frame at ``x + delta + q``
    (replicate-edge lookups).  Equal costs are separated by ``centre_cost``
    (same signature, without ``q``) when given, then by :func:`candidate_order`.
    """
    h, w = shape
    r = k // 2
    best_d = np.full((h, w), np.inf)
    best_c = np.full((h, w), np.inf)
    best_y = np.zeros((h, w), dtype=np.int64)
    best_x = np.zeros((h, w), dtype=np.int64)
    best_t = np.zeros((h, w), dtype=np.int64)
    ys, xs = np.mgrid[0:h, 0:w]
    for ti, dy, dx in candidate_order(d):
        dist = np.zeros((h, w))
        for qy in range(-r, r + 1):
            for qx in range(-r, r + 1):
                dist += tap_cost(ti, qy, qx, dy, dx)
        valid = (ys + dy >= 0) & (ys + dy < h) & (xs + dx >= 0) & (xs + dx < w)
        if centre_cost is None:
            better = valid & (dist < best_d)
        else:
            cc = centre_cost(ti, dy, dx)
            better = valid & ((dist < best_d) | ((dist == best_d) & (cc < best_c)))
            best_c[better] = cc[better]
        best_d[better] = dist[better]
        best_y[better] = ys[better] + dy
        best_x[better] = xs[better] + dx
        best_t[better] = FRAME_INDICES[ti]
    return MatchResult(best_y, best_x, best_t, best_d)


def _padded(arr: np.ndarray, pad: int) -> np.ndarray:
    widths = [(0, 0)] * (arr.ndim - 2) + [(pad, pad), (pad, pad)]
    return np.pad(arr, widths, mode="edge")


def match(
    pred: CensusField,
    frames: tuple[CensusField, CensusField],
    d: int = 3,
    k: int = 3,
    tie_values=None,
) -> MatchResult:
    """Best census-patch match of every predicted pixel within both frames' windows.

    Census descriptors repeat wherever the image is locally flat or
    monotone, so many candidates can share the minimum distance.  Passing
    ``tie_values=(pred_rgb, (frame_rgb, frame_rgb))`` breaks those ties by the
    squared difference of the centre pixels, which makes a prediction equal
    to either input frame select itself.
    """
    _check_window(d, k)
    h, w = pred.bits.shape
    for f in frames:
        if f.bits.shape != (h, w):
            raise ShapeError("match", "resolution", (h, w), f.bits.shape)
    r = k // 2
    pad = d + r
    qp = _padded(pred.bits, r)
    fps = [_padded(f.bits, pad) for f in frames]

    def dist(ti, qy, qx, dy, dx):
        q = qp[r + qy : r + qy + h, r + qx : r + qx + w]
        f = _frame_slice(fps[ti], pad, h, w, dy, dx, qy, qx)
        return _POPCOUNT[q ^ f]

    centre = None
    if tie_values is not None:
        q_rgb = _values(tie_values[0])
        f_rgb = [_padded(_values(f), d) for f in tie_values[1]]
        for f in f_rgb:
            if f.shape[1:] != (h + 2 * d, w + 2 * d):
                raise ShapeError("match", "tie_values resolution", (h, w), f.shape[1:])

        def centre(ti, dy, dx):
            return ((q_rgb - _frame_slice(f_rgb[ti], d, h, w, dy, dx, 0, 0)) ** 2).sum(axis=0)

    return _windowed_argmin(dist, (h, w), d, k, centre)


def _frame_slice(fp: np.ndarray, pad: int, h: int, w: int, dy: int, dx: int, qy: int, qx: int) -> np.ndarray:
    # y + q is read via clip(y + q); y = x + delta may itself lie outside the
    # image, but those candidates are masked out, so reading the extended pad
    # there is harmless.  For in-image y the replicate pad equals clipping.
    oy, ox = pad + dy + qy, pad + dx + qx
    return fp[..., oy : oy + h, ox : ox + w]


def match_rgb(pred, frames, d: int = 3, k: int = 3) -> MatchResult:
    """Same search with summed squared RGB differences as the patch distance."""
    _check_window(d, k)
    q = _values(pred)
    fs = [_values(f) for f in frames]
    _, h, w = q.shape
    for f in fs:
        if f.shape != q.shape:
            raise ShapeError("match_rgb", "shape", q.shape, f.shape)
    r = k // 2
    pad = d + r
    qp = _padded(q, r)
    fps = [_padded(f, pad) for f in fs]

    def dist(ti, qy, qx, dy, dx):
        a = qp[:, r + qy : r + qy + h, r + qx : r + qx + w]
        b = _frame_slice(fps[ti], pad, h, w, dy, dx, qy, qx)
        return ((a - b) ** 2).sum(axis=0)

    return _windowed_argmin(dist, (h, w), d, k)


def gather_pseudo_label(frames, result: MatchResult) -> np.ndarray:
    """RGB value of each matched centre pixel, as a ``(C, H, W)`` array."""
    fs = [_values(f) for f in frames]
    out = np.empty_like(fs[0])
    for t, f in zip(FRAME_INDICES, fs):
        sel = result.frame == t
        out[:, sel] = f[:, result.pos_y[sel], result.pos_x[sel]]
    return out
