"""Mountain Car value landscape: exact vs sparse (M pseudo inputs) on a grid.

    python3 scripts/landscape.py [--M 5] [--seed 0] [--out results/landscape.csv]
"""

import argparse
import csv
import os

from spgptd.config import config_from_dict
from spgptd.experiments import LANDSCAPE_COLUMNS, value_landscape


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--M", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="results/landscape.csv")
    args = ap.parse_args()
    rows, summary = value_landscape(config_from_dict({"task": "mountain_car", "M": args.M}), seed=args.seed)
    os.makedirs(os.path.dirname(args.out) or ".", exist_ok=True)
    with open(args.out, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(LANDSCAPE_COLUMNS)
        w.writerows(rows)
    print(f"N={summary['n_inputs']}  pearson={summary['pearson']:.4f}  (random init {summary['pearson_init']:.4f})")
    print("pseudo inputs (position, velocity, action):")
    for z in summary["Z"]:
        print("  " + "  ".join(f"{v:+.4f}" for v in z))


if __name__ == "__main__":
    main()
