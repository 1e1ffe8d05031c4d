"""Command-line experiment runner.

    spgptd fit TRAJECTORY.json [--config C] [--seed S] [--out DIR]
    spgptd compare-approx [--config C] [--seed S] [--out DIR]
    spgptd retention      [--config C] [--seed S] [--out DIR]
    spgptd learn          [--config C] [--seed S] [--out DIR] [--landscape]
    spgptd bench          [--config C] [--seed S] [--out DIR]

CSV outputs start with a ``# config_hash=...`` comment line followed by a header.
"""

import argparse
import csv
import json
import logging
import os
import sys
import time
from dataclasses import replace

import numpy as np

from . import experiments as ex
from .config import load_config
from .exact import exact_log_marginal, fit_exact, support_form
from .hyperopt import init_pseudo, optimize
from .lowrank import fit_lowrank
from .persist import save_model
from .sparse import fit_sparse, log_marginal
from .trajectory import TrajectoryError, load_trajectory

log = logging.getLogger("spgptd")


def _cell(v):
    # repr keeps full float precision so reruns compare byte for byte
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return int(v)
    return v


def write_csv(path, columns, rows, cfg_hash):
    with open(path, "w", newline="") as f:
        f.write(f"# config_hash={cfg_hash}\n")
        w = csv.writer(f)
        w.writerow(columns)
        for row in rows:
            w.writerow([_cell(v) for v in row])
    log.info("wrote %s (%d rows)", path, len(rows))


def _out_dir(args, cfg):
    out = args.out or cfg.out
    os.makedirs(out, exist_ok=True)
    return out


def fit_from_config(cfg, traj, seed):
    """Fit the configured estimator; returns ``(posterior, metrics)``."""
    params = cfg.model_params(traj.dim)
    metrics = {"estimator": cfg.estimator, "n_transitions": traj.n_transitions, "seed": seed}
    if cfg.estimator == "exact":
        if cfg.fit.get("optimize"):
            params = ex.fit_exact_hyperparams(traj, params, cfg.optimizer.get("max_iterations", 100))
        post = support_form(fit_exact(traj, params))
        metrics["log_marginal"] = exact_log_marginal(traj, params)
    elif cfg.estimator == "lowrank":
        res = fit_lowrank(traj, params, cfg.nu)
        post = res.posterior
        metrics["log_marginal"] = res.log_marginal
        metrics["retention_fraction"] = res.retention_fraction
    else:
        Z = init_pseudo(traj, cfg.M, cfg.fit.get("init", "random-subset"), seed=seed)
        if cfg.fit.get("optimize"):
            res = optimize(traj, params, Z, replace(cfg.optim_config(), rng_seed=seed))
            params, Z = res.params, res.Z
        post = fit_sparse(traj, params, Z)
        metrics["log_marginal"] = log_marginal(traj, params, Z)
        metrics["M"] = int(len(Z))
    return post, metrics


def cmd_fit(args, cfg):
    traj = load_trajectory(args.trajectory)
    seed = cfg.seeds[0]
    t0 = time.perf_counter()
    post, metrics = fit_from_config(cfg, traj, seed)
    fit_ms = 1e3 * (time.perf_counter() - t0)
    path = os.path.join(_out_dir(args, cfg), "model.json")
    save_model(path, post, cfg.estimator, metrics)
    print(json.dumps({**metrics, "fit_ms": fit_ms, "model": path}, sort_keys=True))


def cmd_compare(args, cfg):
    rows = []
    for seed in cfg.seeds:
        rows += [(seed,) + r for r in ex.compare_approx(cfg, seed)]
    out = os.path.join(_out_dir(args, cfg), "compare_approx.csv")
    write_csv(out, ("seed",) + ex.COMPARE_COLUMNS, rows, cfg.hash())
    arr = np.array([r[1:] for r in rows], dtype=float)
    for M in np.unique(arr[:, 0]):
        sel = arr[arr[:, 0] == M]
        print(f"M={int(M):4d}  median ratio pre={np.median(sel[:, 5]):.6g}  post={np.median(sel[:, 6]):.6g}")


def cmd_retention(args, cfg):
    rows = ex.retention_sweep(cfg)
    write_csv(os.path.join(_out_dir(args, cfg), "retention.csv"), ex.RETENTION_COLUMNS, rows, cfg.hash())
    for r in rows:
        print(f"{r[0]:>13s}  nu={r[1]:.3g}  retention={100 * r[2]:.1f}%")


def cmd_learn(args, cfg):
    out = _out_dir(args, cfg)
    rows = ex.learn(cfg)
    write_csv(os.path.join(out, "learn.csv"), ex.LEARN_COLUMNS, rows, cfg.hash())
    arr = np.array([(r[0], r[1], r[2]) for r in rows], dtype=float)
    for seed in cfg.seeds:
        R = arr[arr[:, 0] == seed, 2]
        if len(R):
            print(f"seed {seed}: first-10 mean {R[:10].mean():.3f}  last-10 mean {R[-10:].mean():.3f}")
    if args.landscape:
        grid, summary = ex.value_landscape(cfg)
        write_csv(os.path.join(out, "landscape.csv"), ex.LANDSCAPE_COLUMNS, grid, cfg.hash())
        with open(os.path.join(out, "landscape_summary.json"), "w") as f:
            json.dump(summary, f, indent=2, sort_keys=True)
        print(f"landscape pearson(exact, sparse) = {summary['pearson']:.4f} "
              f"(before pseudo-input optimization {summary['pearson_init']:.4f})")


def cmd_bench(args, cfg):
    rows = ex.bench(cfg)
    write_csv(os.path.join(_out_dir(args, cfg), "bench.csv"), ex.BENCH_COLUMNS, rows, cfg.hash())
    for r in rows:
        print(f"{r[0]:>6s} N={r[1]:5d} M={r[2]:3d}  fit {r[3]:9.2f} ms  predict {r[4]:8.2f} us")


COMMANDS = {
    "fit": cmd_fit,
    "compare-approx": cmd_compare,
    "retention": cmd_retention,
    "learn": cmd_learn,
    "bench": cmd_bench,
}


def build_parser():
    parser = argparse.ArgumentParser(prog="spgptd", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="YAML/JSON experiment configuration")
        p.add_argument("--seed", type=int, help="run a single seed (overrides config seeds)")
        p.add_argument("--out", help="output directory (overrides config 'out')")
        p.add_argument("-v", "--verbose", action="store_true")
        if name == "fit":
            p.add_argument("trajectory", help="trajectory JSON file")
        if name == "learn":
            p.add_argument("--landscape", action="store_true", help="also emit a 50x50 value landscape")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, seeds=[args.seed] if args.seed is not None else None)
        COMMANDS[args.command](args, cfg)
    except (TrajectoryError, ValueError, OSError, np.linalg.LinAlgError, RuntimeError) as e:
        print(f"spgptd {args.command}: error: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
