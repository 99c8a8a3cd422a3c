"""Run configuration: dataclass defaults, flat ``key=value`` files and CLI overrides."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path

from .errors import ConfigError
from .synthesis import ModelConfig
from .tcl import TclConfig


@dataclass
class RunConfig:
    command: str = ""
    seed: int = 0
    model: str | None = None  # "toy" | "paper"; None defers to a checkpoint
    out: str | None = None
    deterministic: bool = True
    # data
    triplet: str | None = None
    synthetic: bool = False
    checkpoint: str | None = None
    output: str | None = None
    pred: str | None = None
    order: str = "1,3"
    # loss
    alpha: float = 0.1
    k: int = 3
    d: int = 3
    matching_space: str = "census"
    alphas: str = "0,0.1,0.5,1.0,2.0"
    ks: str = "3,5,7,9"
    # training
    steps: int = 2000
    lr: float = 5e-4
    crop: int = 64
    # benchmark
    sides: str = "32,64,128,256"
    models: str = "1,2,3"
    channels: int = 16
    align_blocks: int = 2
    max_cost_volume: int = 2**33

    @property
    def tcl(self) -> TclConfig:
        return TclConfig(alpha=self.alpha, k=self.k, d=self.d, matching_space=self.matching_space)

    @property
    def model_config(self) -> ModelConfig:
        return ModelConfig.named(self.model or "toy")

    @property
    def frame_order(self) -> tuple[int, int]:
        """Zero-based indices of the two input frames within (im1, im2, im3)."""
        try:
            a, b = (int(v) for v in self.order.split(","))
        except ValueError as exc:
            raise ConfigError(f"--order expects two frame numbers like '1,3', got {self.order!r}") from exc
        if not {a, b} <= {1, 2, 3} or a == b:
            raise ConfigError(f"--order frames must be two distinct values from 1..3, got {self.order!r}")
        return a - 1, b - 1


_FIELDS = {f.name: f for f in dataclasses.fields(RunConfig)}


def _coerce(name: str, raw):
    if raw is None:
        return None
    current = RunConfig.__dataclass_fields__[name].default
    if isinstance(current, bool):
        if isinstance(raw, bool):
            return raw
        v = str(raw).strip().lower()
        if v in ("1", "true", "yes", "on"):
            return True
        if v in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{name}: expected a boolean, got {raw!r}")
    try:
        if isinstance(current, int):
            return int(raw)
        if isinstance(current, float):
            return float(raw)
    except ValueError as exc:
        raise ConfigError(f"{name}: cannot parse {raw!r}") from exc
    return str(raw)


def read_config_file(path) -> dict[str, object]:
    """Parse ``key = value`` lines; ``#`` starts a comment, dashes equal underscores."""
    values: dict[str, object] = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in _FIELDS or key == "command":
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        values[key] = _coerce(key, value)
    return values


def build_config(command: str, file_values: dict, overrides: dict) -> RunConfig:
    cfg = RunConfig(command=command)
    for source in (file_values, overrides):
        for key, value in source.items():
            if value is not None:
                setattr(cfg, key, _coerce(key, value))
    return cfg


def parse_list(text: str, kind=float) -> list:
    try:
        return [kind(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError(f"cannot parse list {text!r}") from exc
