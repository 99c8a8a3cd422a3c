"""Texture consistency loss and the combined L1 + alpha * TCL objective.

The matching step is a frozen, non-differentiable argmin: gradients reach the
prediction only through the L1 comparison with the assembled pseudo-label.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autograd import Tensor, as_tensor, mean_abs_diff, weighted_sum
from .census import (
    MatchResult,
    census_transform,
    gather_pseudo_label,
    luminance,
    match,
    match_rgb,
)
from .errors import ConfigError, ShapeError

MATCHING_SPACES = ("census", "rgb")


@dataclass(frozen=True)
class TclConfig:
    alpha: float = 0.1
    k: int = 3
    d: int = 3
    matching_space: str = "census"

    def __post_init__(self):
        if self.alpha < 0:
            raise ConfigError(f"alpha must be >= 0, got {self.alpha}")
        if self.k < 1 or self.k % 2 == 0:
            raise ConfigError(f"patch size K must be odd and positive, got {self.k}")
        if self.d < 1:
            raise ConfigError(f"maximum displacement d must be >= 1, got {self.d}")
        if self.matching_space not in MATCHING_SPACES:
            raise ConfigError(f"matching_space must be one of {MATCHING_SPACES}, got {self.matching_space!r}")


@dataclass
class TclTerm:
    loss: Tensor
    pseudo_label: np.ndarray
    matches: MatchResult


@dataclass
class LossReport:
    l1_term: float
    tcl_term: float
    total: float
    alpha: float
    pseudo_label: np.ndarray
    matches: MatchResult
    loss: Tensor  # differentiable total


def l1_loss(pred, gt) -> Tensor:
    pred = as_tensor(pred)
    gt_v = gt.data if isinstance(gt, Tensor) else np.asarray(gt)
    if gt_v.shape != pred.shape:
        raise ShapeError("l1_loss", "shape", pred.shape, gt_v.shape)
    return mean_abs_diff(pred, gt_v)


def find_matches(pred, inputs, cfg: TclConfig) -> MatchResult:
    pred = as_tensor(pred)
    frames = [as_tensor(f) for f in inputs]
    for f in frames:
        if f.shape != pred.shape:
            raise ShapeError("tcl_loss", "shape", pred.shape, f.shape)
    if cfg.matching_space == "rgb":
        return match_rgb(pred, frames, d=cfg.d, k=cfg.k)
    pc = census_transform(luminance(pred))
    fcs = tuple(census_transform(luminance(f)) for f in frames)
    return match(pc, fcs, d=cfg.d, k=cfg.k, tie_values=(pred, frames))


def tcl_loss(pred, inputs, cfg: TclConfig = TclConfig()) -> TclTerm:
    """Mean |pred - pseudo_label| with the pseudo-label built by patch matching."""
    pred = as_tensor(pred)
    matches = find_matches(pred, inputs, cfg)
    label = gather_pseudo_label(inputs, matches)
    return TclTerm(mean_abs_diff(pred, label), label, matches)


def combined_objective(pred, gt, inputs, cfg: TclConfig = TclConfig()) -> LossReport:
    pred = as_tensor(pred)
    l1 = l1_loss(pred, gt)
    tcl = tcl_loss(pred, inputs, cfg)
    loss = weighted_sum([(1.0, l1), (cfg.alpha, tcl.loss)])
    return LossReport(
        l1_term=l1.item(),
        tcl_term=tcl.loss.item(),
        total=loss.item(),
        alpha=cfg.alpha,
        pseudo_label=tcl.pseudo_label,
        matches=tcl.matches,
        loss=loss,
    )
