"""Exact vs sparse learning curves on Mountain Car, summarized per estimator.

    python3 scripts/learning_curves.py [--seeds 10] [--episodes 100] [--out results/curves.csv]
"""

import argparse
import csv
import os

import numpy as np

from spgptd.config import config_from_dict
from spgptd.experiments import LEARN_COLUMNS, learn


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--seeds", type=int, default=10)
    ap.add_argument("--episodes", type=int, default=100)
    ap.add_argument("--out", default="results/curves.csv")
    args = ap.parse_args()
    cfg = config_from_dict({"task": "mountain_car", "episodes": args.episodes, "seeds": list(range(args.seeds))})
    rows = learn(cfg, estimators=["exact", "sparse"])
    os.makedirs(os.path.dirname(args.out) or ".", exist_ok=True)
    with open(args.out, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(LEARN_COLUMNS)
        w.writerows(rows)
    for est in ("exact", "sparse"):
        R = np.array([[r[2] for r in rows if r[3] == est and r[0] == s] for s in cfg.seeds])
        curve = R.mean(axis=0)
        ms = np.mean([r[4] for r in rows if r[3] == est])
        print(f"{est:>6s}: first-10 {curve[:10].mean():6.2f}  last-10 {curve[-10:].mean():6.2f}  "
              f"mean step {ms:7.1f} ms/episode")


if __name__ == "__main__":
    main()
