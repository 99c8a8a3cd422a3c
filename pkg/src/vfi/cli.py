"""``vfi`` command line: interpolate, tcl-eval, bench-align, overfit, param-count.

Every command writes CSV (header plus one row per measurement) to ``--out`` or
stdout.  Failures exit nonzero and print one JSON object ``{"error": code,
"message": ...}`` on stderr.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import bench, imageio
from .autograd import Tensor
from .config import RunConfig, build_config, parse_list, read_config_file
from .errors import ConfigError, VfiError
from .metrics import psnr, ssim
from .synthesis import PAPER_COUNTS, ModelConfig, count_params, init_model, interpolate, load_checkpoint, save_checkpoint
from .tcl import TclConfig, l1_loss, tcl_loss
from .train import TrainConfig, evaluate, overfit, random_crop, synthetic_triplet

COMMANDS = ("interpolate", "tcl-eval", "bench-align", "overfit", "param-count")


def _fmt(v) -> str:
    if isinstance(v, float):
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return repr(v)
    return str(v)


class CsvSink:
    def __init__(self, path: str | None, header: list[str]):
        self.path = path
        self.buf = io.StringIO()
        self.writer = csv.writer(self.buf, lineterminator="\n")
        self.writer.writerow(header)

    def row(self, values) -> None:
        self.writer.writerow([_fmt(v) for v in values])

    def close(self) -> None:
        if self.path:
            Path(self.path).write_text(self.buf.getvalue())
        else:
            sys.stdout.write(self.buf.getvalue())
            sys.stdout.flush()


def _info(cfg: RunConfig, msg: str) -> None:
    # CSV owns stdout when no --out is given
    print(msg, file=sys.stdout if cfg.out else sys.stderr)


def _load_triplet(cfg: RunConfig):
    if cfg.synthetic:
        return synthetic_triplet(cfg.crop, seed=cfg.seed)
    if not cfg.triplet:
        raise ConfigError("--triplet DIR is required (or --synthetic)")
    return imageio.ingest_triplet(cfg.triplet).frames


def _load_model(cfg: RunConfig):
    if cfg.checkpoint:
        requested = cfg.model_config if cfg.model else None
        return load_checkpoint(cfg.checkpoint, requested)
    return init_model(cfg.model_config, seed=cfg.seed)


def cmd_interpolate(cfg: RunConfig) -> int:
    frames = _load_triplet(cfg)
    ia, ib = cfg.frame_order
    target = ({0, 1, 2} - {ia, ib}).pop()
    params = _load_model(cfg)
    pred = interpolate(Tensor(frames[ia]), Tensor(frames[ib]), params).data
    if not np.all(np.isfinite(pred)):
        raise VfiError("prediction contains non-finite values")
    output = cfg.output or "interpolated.png"
    imageio.write_image(output, pred)
    sink = CsvSink(cfg.out, ["triplet", "order", "target", "psnr_db", "ssim", "output"])
    sink.row([cfg.triplet or "synthetic", cfg.order.replace(",", ":"), f"im{target + 1}",
              psnr(pred, frames[target]), ssim(pred, frames[target]), output])
    sink.close()
    return 0


def cmd_tcl_eval(cfg: RunConfig) -> int:
    first, middle, last = _load_triplet(cfg)
    if cfg.pred:
        pred = imageio.read_image(cfg.pred)
    elif cfg.checkpoint:
        pred = interpolate(Tensor(first), Tensor(last), _load_model(cfg)).data
    else:
        raise ConfigError("tcl-eval needs --pred IMAGE or --checkpoint FILE")
    if pred.shape != middle.shape:
        raise ConfigError(f"prediction shape {pred.shape} does not match triplet {middle.shape}")
    alphas = parse_list(cfg.alphas, float)
    ks = parse_list(cfg.ks, int)
    l1 = l1_loss(Tensor(pred), middle).item()
    sink = CsvSink(cfg.out, ["l1_term", "tcl_term", "total", "alpha", "K", "d", "matching_space", "mean_match_distance"])
    for k in ks:
        term = tcl_loss(Tensor(pred), (first, last), TclConfig(alpha=0.0, k=k, d=cfg.d, matching_space=cfg.matching_space))
        tcl = term.loss.item()
        mean_dist = float(term.matches.distance.mean())
        for alpha in alphas:
            sink.row([l1, tcl, 1.0 * l1 + alpha * tcl, alpha, k, cfg.d, cfg.matching_space, mean_dist])
    sink.close()
    return 0


def cmd_bench_align(cfg: RunConfig) -> int:
    sides = parse_list(cfg.sides, int)
    models = parse_list(cfg.models, int)
    result = bench.bench_align(
        sides=sides, models=models, channels=cfg.channels, align_blocks=cfg.align_blocks,
        seed=cfg.seed, max_cost_volume=cfg.max_cost_volume, timing=not cfg.deterministic,
        log=lambda m: _info(cfg, f"# {m}"),
    )
    sink = CsvSink(cfg.out, ["model", "N", "mac_count", "wall_ms"])
    for r in result.rows:
        sink.row([r.model, r.n, r.mac_count, "" if r.wall_ms is None else f"{r.wall_ms:.3f}"])
    sink.close()
    for m in models:
        _info(cfg, f"# model {m}: log-log slope {result.slope(m):.4f} over {len(result.macs(m))} sizes")
    return 0


def cmd_overfit(cfg: RunConfig) -> int:
    frames = _load_triplet(cfg)
    tcfg = TrainConfig(steps=cfg.steps, lr=cfg.lr, crop=cfg.crop, seed=cfg.seed,
                       model=cfg.model_config, tcl=cfg.tcl)
    sink = CsvSink(cfg.out, ["step", "lr", "l1_term", "tcl_term", "total"])
    params, _ = overfit(frames, tcfg, on_step=lambda r: sink.row([r.step, r.lr, r.l1, r.tcl, r.total]))
    sink.close()
    save_checkpoint(params, cfg.checkpoint or "overfit.ckpt")
    crop = random_crop(list(frames), cfg.crop, np.random.default_rng(cfg.seed))
    _, p, s = evaluate(params, crop)
    _info(cfg, f"# final psnr_db={_fmt(p)} ssim={_fmt(s)}")
    return 0


def param_count_rows(model: str = "paper") -> list[tuple[str, int, float, float, str]]:
    """``(module, count, paper_millions, relative_error, status)`` rows."""
    counts = count_params(ModelConfig.named(model))
    rows = []
    for name, count in counts.items():
        paper = PAPER_COUNTS.get(name)
        rel = abs(count - paper * 1e6) / (paper * 1e6)
        rows.append((name, count, paper, rel, "match" if rel <= 0.005 else "mismatch"))
    return rows


def cmd_param_count(cfg: RunConfig) -> int:
    sink = CsvSink(cfg.out, ["module", "count", "paper_millions", "relative_error", "status"])
    for row in param_count_rows(cfg.model or "paper"):
        sink.row(row)
    sink.close()
    return 0


HANDLERS = {
    "interpolate": cmd_interpolate,
    "tcl-eval": cmd_tcl_eval,
    "bench-align": cmd_bench_align,
    "overfit": cmd_overfit,
    "param-count": cmd_param_count,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key=value file mirroring the run options")
    common.add_argument("--seed", type=int)
    common.add_argument("--out", help="CSV destination (default stdout)")
    common.add_argument("--model", choices=("toy", "paper"))
    common.add_argument("--deterministic", dest="deterministic", action="store_true", default=None)
    common.add_argument("--no-deterministic", dest="deterministic", action="store_false",
                        help="record wall-clock timings (non-reproducible)")
    data = argparse.ArgumentParser(add_help=False)
    data.add_argument("--triplet", help="directory holding im1/im2/im3")
    data.add_argument("--synthetic", action="store_true", default=None,
                      help="use the built-in synthetic translating-texture triplet")
    data.add_argument("--checkpoint")
    loss = argparse.ArgumentParser(add_help=False)
    loss.add_argument("--alpha", type=float)
    loss.add_argument("-K", "--k", dest="k", type=int)
    loss.add_argument("-d", "--d", dest="d", type=int)
    loss.add_argument("--matching-space", dest="matching_space", choices=("census", "rgb"))

    parser = argparse.ArgumentParser(prog="vfi", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("interpolate", parents=[common, data], help="predict a frame and score it")
    p.add_argument("--order", help="input frames as 'a,b' (default 1,3; '1,2' extrapolates im3)")
    p.add_argument("--output", help="image path for the prediction (.png/.ppm)")

    p = sub.add_parser("tcl-eval", parents=[common, data, loss], help="L1/TCL terms over alpha and K sweeps")
    p.add_argument("--pred", help="prediction image to score")
    p.add_argument("--alphas")
    p.add_argument("--ks")

    p = sub.add_parser("bench-align", parents=[common], help="MAC scaling of the alignment models")
    p.add_argument("--sides", help="comma-separated square sizes (N = side^2)")
    p.add_argument("--models", help="subset of 1,2,3")
    p.add_argument("--channels", type=int)
    p.add_argument("--align-blocks", dest="align_blocks", type=int)
    p.add_argument("--max-cost-volume", dest="max_cost_volume", type=int)

    p = sub.add_parser("overfit", parents=[common, data, loss], help="train the toy model on one triplet")
    p.add_argument("--steps", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--crop", type=int)

    sub.add_parser("param-count", parents=[common], help="structural parameter counts vs published")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    overrides = {k: v for k, v in vars(args).items() if k not in ("command", "config")}
    try:
        file_values = read_config_file(args.config) if args.config else {}
        cfg = build_config(args.command, file_values, overrides)
        return HANDLERS[args.command](cfg)
    except VfiError as exc:
        print(json.dumps({"error": exc.code, "message": str(exc)}), file=sys.stderr)
        return exc.exit_status


if __name__ == "__main__":
    sys.exit(main())
