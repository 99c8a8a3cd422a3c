"""MAC-count scaling of the three alignment models, with optional wall-clock timing.

Writes the raw rows as CSV and prints log-log slopes plus the Model-3 / Model-1
and Model-2 / Model-3 count ratios at each size.
"""

import argparse
import csv
import sys

from vfi.bench import bench_align


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sides", default="32,64,128,256")
    ap.add_argument("--channels", type=int, default=16)
    ap.add_argument("--align-blocks", type=int, default=2)
    ap.add_argument("--max-cost-volume", type=int, default=2**33)
    ap.add_argument("--timing", action="store_true", help="also record wall-clock milliseconds")
    ap.add_argument("--out", help="CSV path (default stdout)")
    args = ap.parse_args()

    res = bench_align(
        sides=[int(s) for s in args.sides.split(",")],
        channels=args.channels,
        align_blocks=args.align_blocks,
        max_cost_volume=args.max_cost_volume,
        timing=args.timing,
        log=lambda m: print("#", m, file=sys.stderr),
    )
    fh = open(args.out, "w", newline="") if args.out else sys.stdout
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["model", "N", "mac_count", "wall_ms"])
    for r in res.rows:
        w.writerow([r.model, r.n, r.mac_count, "" if r.wall_ms is None else f"{r.wall_ms:.3f}"])
    if args.out:
        fh.close()

    for m in (1, 2, 3):
        print(f"# model {m}: slope {res.slope(m):.4f}", file=sys.stderr)
    m1, m2, m3 = res.macs(1), res.macs(2), res.macs(3)
    for n in sorted(m3):
        line = f"# N={n}: m3/m1 {m3[n] / m1[n]:.4f}"
        if n in m2:
            line += f"  m2/m3 {m2[n] / m3[n]:.2f}"
        print(line, file=sys.stderr)


if __name__ == "__main__":
    main()
