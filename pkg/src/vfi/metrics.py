"""PSNR and SSIM on images normalised to [0, 1]."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import correlate1d

from .autograd import Tensor
from .census import LUMA_WEIGHTS
from .errors import ShapeError

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


@dataclass(frozen=True)
class MetricReport:
    psnr_db: float  # math.inf when the images are identical
    ssim: float


def _pair(a, b, op: str) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(a.data if isinstance(a, Tensor) else a, dtype=np.float64)
    b = np.asarray(b.data if isinstance(b, Tensor) else b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(op, "shape", a.shape, b.shape)
    return a, b


def psnr(a, b) -> float:
    a, b = _pair(a, b, "psnr")
    a, b = np.clip(a, 0.0, 1.0), np.clip(b, 0.0, 1.0)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(1.0 / mse)


def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    x = np.arange(size) - (size - 1) / 2
    g = np.exp(-(x**2) / (2 * sigma**2))
    return g / g.sum()


def _luma(x: np.ndarray) -> np.ndarray:
    if x.ndim == 3 and x.shape[0] == 3:
        r, g, b = LUMA_WEIGHTS
        return r * x[0] + g * x[1] + b * x[2]
    if x.ndim == 3 and x.shape[0] == 1:
        return x[0]
    if x.ndim == 2:
        return x
    raise ShapeError("ssim", "channels", "1 or 3", x.shape)


def ssim(a, b) -> float:
    """Mean SSIM over an 11x11 Gaussian window (sigma 1.5) on luminance."""
    a, b = _pair(a, b, "ssim")
    x, y = _luma(a), _luma(b)
    if min(x.shape) < SSIM_WINDOW:
        raise ShapeError("ssim", "spatial size", f">= {SSIM_WINDOW}", x.shape)
    g = gaussian_window()

    def blur(img):
        return correlate1d(correlate1d(img, g, axis=0, mode="nearest"), g, axis=1, mode="nearest")

    c1 = SSIM_K1**2
    c2 = SSIM_K2**2
    mx, my = blur(x), blur(y)
    sxx = blur(x * x) - mx * mx
    syy = blur(y * y) - my * my
    sxy = blur(x * y) - mx * my
    s = ((2 * mx * my + c1) * (2 * sxy + c2)) / ((mx * mx + my * my + c1) * (sxx + syy + c2))
    return float(s.mean())


def evaluate_pair(pred, target) -> MetricReport:
    return MetricReport(psnr(pred, target), ssim(pred, target))
