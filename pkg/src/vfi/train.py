"""Single-triplet overfitting with Adam and cosine-annealed learning rate."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import gaussian_filter

from .autograd import Tensor, backward
from .errors import DivergenceError
from .metrics import psnr, ssim
from .synthesis import ModelConfig, ModelParams, init_model, interpolate, named_parameters
from .tcl import TclConfig, combined_objective


@dataclass
class TrainConfig:
    steps: int = 2000
    lr: float = 5e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    crop: int = 64
    seed: int = 0
    model: ModelConfig = field(default_factory=ModelConfig.toy)
    tcl: TclConfig = field(default_factory=TclConfig)


@dataclass
class StepRecord:
    step: int
    lr: float
    l1: float
    tcl: float
    total: float


class Adam:
    def __init__(self, params: list[Tensor], beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = [np.zeros_like(p.data) for p in params]
        self.v = [np.zeros_like(p.data) for p in params]
        self.t = 0

    def step(self, lr: float) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1 - b1**self.t
        c2 = 1 - b2**self.t
        for p, m, v in zip(self.params, self.m, self.v):
            if p.grad is None:
                continue
            g = p.grad
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            p.data = p.data - lr * (m / c1) / (np.sqrt(v / c2) + self.eps)

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None


def cosine_lr(step: int, total: int, base: float) -> float:
    """Cosine annealing from ``base`` at step 0 toward 0 at ``total``."""
    return 0.5 * base * (1.0 + math.cos(math.pi * step / total))


def random_crop(frames: list[np.ndarray], size: int, rng: np.random.Generator) -> list[np.ndarray]:
    _, h, w = frames[0].shape
    size_y, size_x = min(size, h), min(size, w)
    y = int(rng.integers(0, h - size_y + 1))
    x = int(rng.integers(0, w - size_x + 1))
    return [f[:, y : y + size_y, x : x + size_x] for f in frames]


def overfit(
    frames: tuple[np.ndarray, np.ndarray, np.ndarray],
    cfg: TrainConfig = TrainConfig(),
    on_step=None,
) -> tuple[ModelParams, list[StepRecord]]:
    """Train on one triplet ``(first, middle, last)``; the middle frame is the target.

    A single crop is drawn once from ``cfg.seed`` and reused every step.
    """
    rng = np.random.default_rng(cfg.seed)
    first, middle, last = (Tensor(np.ascontiguousarray(f)) for f in random_crop(list(frames), cfg.crop, rng))
    params = init_model(cfg.model, seed=cfg.seed)
    opt = Adam([t for _, t in named_parameters(params)], cfg.beta1, cfg.beta2, cfg.eps)
    history: list[StepRecord] = []
    for step in range(cfg.steps):
        lr = cosine_lr(step, cfg.steps, cfg.lr)
        pred = interpolate(first, last, params)
        report = combined_objective(pred, middle, (first, last), cfg.tcl)
        if not np.isfinite(report.total):
            raise DivergenceError(f"loss became {report.total} at step {step}")
        opt.zero_grad()
        backward(report.loss)
        opt.step(lr)
        rec = StepRecord(step, lr, report.l1_term, report.tcl_term, report.total)
        history.append(rec)
        if on_step is not None:
            on_step(rec)
    return params, history


def evaluate(params: ModelParams, frames) -> tuple[np.ndarray, float, float]:
    first, middle, last = (Tensor(np.ascontiguousarray(f)) for f in frames)
    pred = interpolate(first, last, params).data
    return pred, psnr(pred, middle.data), ssim(pred, middle.data)


def synthetic_triplet(size: int = 64, shift: tuple[int, int] = (1, 1), seed: int = 0, smooth: float = 2.0):
    """Three crops of one smooth random RGB texture, each displaced by ``shift``.

    Returns ``(first, middle, last)`` with values in ``[0.1, 0.9]``.
    """
    rng = np.random.default_rng(seed)
    sy, sx = shift
    pad = 2 * max(abs(sy), abs(sx)) + 4
    n = size + 2 * pad
    tex = np.stack([gaussian_filter(rng.standard_normal((n, n)), smooth, mode="wrap") for _ in range(3)])
    tex = (tex - tex.min()) / (tex.max() - tex.min())
    tex = 0.1 + 0.8 * tex

    def crop(k):
        y, x = pad + k * sy, pad + k * sx
        return np.ascontiguousarray(tex[:, y : y + size, x : x + size])

    return crop(-1), crop(0), crop(1)
