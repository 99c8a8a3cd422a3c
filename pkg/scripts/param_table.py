"""Print structural parameter counts next to the published module sizes."""

import argparse

from vfi.cli import param_count_rows


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--model", default="paper", choices=("toy", "paper"))
    args = ap.parse_args()
    print(f"{'module':<16}{'count':>12}{'published':>12}{'rel err':>10}  status")
    for name, count, paper, rel, status in param_count_rows(args.model):
        print(f"{name:<16}{count:>12,}{paper:>11.2f}M{rel:>10.2%}  {status}")


if __name__ == "__main__":
    main()
