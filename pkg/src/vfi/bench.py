"""Alignment complexity benchmark: MAC counts (and optionally wall time) vs pixel count."""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .align import (
    Model1Params,
    align_model1,
    align_model2,
    cspa,
    init_align_block,
    init_cspa,
    init_model2,
    random_pyramid,
)
from .counter import count_macs
from .errors import MemoryGuardError

DEFAULT_SIDES = (32, 64, 128, 256)
MODELS = (1, 2, 3)


@dataclass
class BenchRow:
    model: int
    n: int
    mac_count: int
    wall_ms: float | None


@dataclass
class BenchResult:
    rows: list[BenchRow]
    skipped: list[tuple[int, int, str]]

    def macs(self, model: int) -> dict[int, int]:
        return {r.n: r.mac_count for r in self.rows if r.model == model}

    def slope(self, model: int) -> float:
        """Least-squares slope of log(MACs) against log(N)."""
        pts = sorted(self.macs(model).items())
        if len(pts) < 2:
            return float("nan")
        n, m = np.array(pts, dtype=np.float64).T
        return float(np.polyfit(np.log(n), np.log(m), 1)[0])


def bench_align(
    sides=DEFAULT_SIDES,
    models=MODELS,
    channels: int = 16,
    align_blocks: int = 2,
    seed: int = 0,
    max_cost_volume: int = 2**33,
    timing: bool = False,
    log=None,
) -> BenchResult:
    rng = np.random.default_rng(seed)
    m1 = Model1Params(init_align_block(channels, align_blocks, rng))
    m2 = init_model2(channels, rng)
    m2.max_cost_volume = max_cost_volume
    m3 = init_cspa(channels, align_blocks, rng)
    runners = {1: lambda s, r: align_model1(s, r, m1), 2: lambda s, r: align_model2(s, r, m2), 3: lambda s, r: cspa(s, r, m3)}
    rows: list[BenchRow] = []
    skipped: list[tuple[int, int, str]] = []
    for side in sides:
        prng = np.random.default_rng([seed, side])
        src = random_pyramid(channels, side, side, prng)
        ref = random_pyramid(channels, side, side, prng)
        for model in models:
            try:
                with count_macs() as counter:
                    t0 = time.perf_counter()
                    runners[model](src, ref)
                    elapsed = (time.perf_counter() - t0) * 1e3
            except MemoryGuardError as exc:
                skipped.append((model, side * side, str(exc)))
                if log:
                    log(f"skipping model {model} at N={side * side}: {exc}")
                continue
            rows.append(BenchRow(model, side * side, counter.total, elapsed if timing else None))
    return BenchResult(rows, skipped)
