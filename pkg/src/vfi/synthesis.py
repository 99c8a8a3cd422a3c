"""Attention fusion, reconstruction, full-model assembly and parameter bookkeeping."""

from __future__ import annotations

import dataclasses
import json
import struct
from dataclasses import dataclass

import numpy as np

from .align import (
    CSPAParams,
    ExtractionParams,
    align_block_specs,
    cspa,
    extract_pyramid,
    extraction_specs,
    init_cspa,
    init_extraction,
)
from .autograd import Tensor, add, as_tensor, concat, mul, sigmoid, sub
from .errors import CheckpointError, ConfigError, ShapeError
from .ops import ConvParams, ConvSpec, ResBlockParams, conv, init_conv, init_res_block, res_block

# published module sizes, in millions of parameters
PAPER_COUNTS = {
    "res_block": 0.3,
    "extraction": 4.28,
    "alignment": 12.52,
    "fusion": 0.29,
    "reconstruction": 11.80,
    "total": 28.89,
}


@dataclass(frozen=True)
class ModelConfig:
    channels: int = 16
    recon_blocks: int = 4
    extract_blocks: int = 5
    align_blocks: int = 2

    @classmethod
    def toy(cls) -> "ModelConfig":
        return cls()

    @classmethod
    def paper(cls) -> "ModelConfig":
        return cls(channels=128, recon_blocks=40, extract_blocks=5, align_blocks=5)

    @classmethod
    def named(cls, name: str) -> "ModelConfig":
        if name == "toy":
            return cls.toy()
        if name == "paper":
            return cls.paper()
        raise ConfigError(f"unknown model config {name!r} (expected 'toy' or 'paper')")


@dataclass
class FusionParams:
    conv: ConvParams  # 2C -> C


@dataclass
class ReconParams:
    blocks: list[ResBlockParams]
    out: ConvParams  # C -> 3


@dataclass
class ModelParams:
    config: ModelConfig
    extraction: ExtractionParams
    align_fwd: CSPAParams  # frame_a -> middle
    align_bwd: CSPAParams  # frame_b -> middle
    fusion: FusionParams
    recon: ReconParams


def init_model(config: ModelConfig = ModelConfig(), seed: int = 0) -> ModelParams:
    rng = np.random.default_rng(seed)
    c = config.channels
    return ModelParams(
        config=config,
        extraction=init_extraction(c, config.extract_blocks, rng),
        align_fwd=init_cspa(c, config.align_blocks, rng),
        align_bwd=init_cspa(c, config.align_blocks, rng),
        fusion=FusionParams(init_conv(ConvSpec(2 * c, c), rng, gain=np.sqrt(0.5))),
        recon=ReconParams(
            blocks=[init_res_block(c, rng) for _ in range(config.recon_blocks)],
            out=init_conv(ConvSpec(c, 3), rng, gain=np.sqrt(0.5)),
        ),
    )


# ---------------------------------------------------------------------------
# operators


def attention_fuse(a: Tensor, b: Tensor, params: FusionParams) -> Tensor:
    """``M * a + (1 - M) * b`` with a per-channel sigmoid mask ``M``."""
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise ShapeError("attention_fuse", "shape", a.shape, b.shape)
    m = sigmoid(conv(concat([a, b]), params.conv))
    # b + M (a - b) keeps the result inside [min(a, b), max(a, b)]
    return add(b, mul(m, sub(a, b)))


def reconstruct(fused: Tensor, params: ReconParams) -> Tensor:
    if fused.channels != params.out.spec.in_channels:
        raise ShapeError("reconstruct", "channels", params.out.spec.in_channels, fused.channels)
    f = fused
    for rb in params.blocks:
        f = res_block(f, rb)
    return conv(f, params.out)


def interpolate(frame_a: Tensor, frame_b: Tensor, params: ModelParams) -> Tensor:
    """Predict the frame between ``frame_a`` and ``frame_b``."""
    frame_a, frame_b = as_tensor(frame_a), as_tensor(frame_b)
    if frame_a.shape != frame_b.shape:
        raise ShapeError("interpolate", "shape", frame_a.shape, frame_b.shape)
    pa = extract_pyramid(frame_a, params.extraction)
    pb = extract_pyramid(frame_b, params.extraction)
    fa = cspa(pa, pb, params.align_fwd)
    fb = cspa(pb, pa, params.align_bwd)
    return reconstruct(attention_fuse(fa, fb, params.fusion), params.recon)


# ---------------------------------------------------------------------------
# parameter bookkeeping


def named_parameters(obj, prefix: str = "") -> list[tuple[str, Tensor]]:
    """Every trainable tensor under ``obj``, with stable dotted names."""
    out: list[tuple[str, Tensor]] = []
    if isinstance(obj, Tensor):
        out.append((prefix, obj))
    elif isinstance(obj, (list, tuple)):
        for i, item in enumerate(obj):
            out += named_parameters(item, f"{prefix}.{i}" if prefix else str(i))
    elif dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        for f in dataclasses.fields(obj):
            out += named_parameters(getattr(obj, f.name), f"{prefix}.{f.name}" if prefix else f.name)
    return out


def module_specs(config: ModelConfig) -> dict[str, list[ConvSpec]]:
    c = config.channels
    cspa_one = align_block_specs(c, config.align_blocks) * 3 + [ConvSpec(2 * c, c), ConvSpec(3 * c, c)]
    return {
        "extraction": extraction_specs(c, config.extract_blocks),
        "alignment": cspa_one * 2,
        "fusion": [ConvSpec(2 * c, c)],
        "reconstruction": [ConvSpec(c, c)] * (2 * config.recon_blocks) + [ConvSpec(c, 3)],
    }


def count_params(params_or_config) -> dict[str, int]:
    """Structural parameter counts per module, plus one residual block and the total.

    Accepts a :class:`ModelParams` or a bare :class:`ModelConfig`; counting
    never touches weight values.
    """
    config = params_or_config.config if isinstance(params_or_config, ModelParams) else params_or_config
    counts = {name: sum(s.param_count for s in specs) for name, specs in module_specs(config).items()}
    c = config.channels
    counts = {"res_block": 2 * ConvSpec(c, c).param_count, **counts}
    counts["total"] = sum(v for k, v in counts.items() if k != "res_block")
    return counts


# ---------------------------------------------------------------------------
# checkpoints: <u64 header length><JSON header><float64 little-endian payload>


def save_checkpoint(params: ModelParams, path) -> None:
    tensors = named_parameters(params)
    entries = []
    offset = 0
    for name, t in tensors:
        nbytes = t.data.size * 8
        entries.append({"name": name, "shape": list(t.shape), "offset": offset, "nbytes": nbytes})
        offset += nbytes
    header = json.dumps(
        {"format": "vfi-checkpoint", "version": 1, "dtype": "<f8",
         "config": dataclasses.asdict(params.config), "tensors": entries},
        sort_keys=True,
    ).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        for _, t in tensors:
            fh.write(np.ascontiguousarray(t.data, dtype="<f8").tobytes())


def read_checkpoint_header(path) -> dict:
    with open(path, "rb") as fh:
        raw = fh.read(8)
        if len(raw) != 8:
            raise CheckpointError(f"{path}: truncated checkpoint")
        (n,) = struct.unpack("<Q", raw)
        try:
            header = json.loads(fh.read(n).decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise CheckpointError(f"{path}: unreadable header ({exc})") from exc
    if header.get("format") != "vfi-checkpoint":
        raise CheckpointError(f"{path}: not a vfi checkpoint")
    return header


def load_checkpoint(path, config: ModelConfig | None = None) -> ModelParams:
    """Load weights; if ``config`` is given it must equal the stored one."""
    header = read_checkpoint_header(path)
    stored = ModelConfig(**header["config"])
    if config is not None and config != stored:
        raise CheckpointError(f"checkpoint config {stored} does not match requested {config}")
    params = init_model(stored, seed=0)
    targets = dict(named_parameters(params))
    with open(path, "rb") as fh:
        (n,) = struct.unpack("<Q", fh.read(8))
        fh.seek(8 + n)
        payload = fh.read()
    names = {e["name"] for e in header["tensors"]}
    if names != set(targets):
        missing = sorted(set(targets) - names)[:3]
        raise CheckpointError(f"checkpoint tensors do not match model layout (e.g. missing {missing})")
    for e in header["tensors"]:
        t = targets[e["name"]]
        if tuple(e["shape"]) != t.shape:
            raise CheckpointError(f"{e['name']}: shape {e['shape']} != expected {list(t.shape)}")
        chunk = payload[e["offset"] : e["offset"] + e["nbytes"]]
        if len(chunk) != e["nbytes"]:
            raise CheckpointError(f"{path}: truncated payload at {e['name']}")
        t.data = np.frombuffer(chunk, dtype="<f8").astype(np.float64).reshape(t.shape)
    return params
