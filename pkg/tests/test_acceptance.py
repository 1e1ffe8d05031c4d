"""Acceptance checks at their stated tolerances; each prints one PASS/FAIL line."""

import time
import tracemalloc

import numpy as np
import pytest

from spgptd import experiments as ex
from spgptd.config import config_from_dict
from spgptd.exact import exact_log_marginal, fit_exact, predict_exact
from spgptd.kernel import KernelParams
from spgptd.lowrank import fit_lowrank
from spgptd.sparse import fit_sparse, log_marginal, log_marginal_grad, predict_sparse
from spgptd.trajectory import ModelParams, Trajectory

from conftest import ACCEPTANCE_LINES, random_params, random_traj, rel_err, spread_traj
from test_exact import joint_gaussian_oracle
from test_sparse import fd_grad


def report(n, ok, detail):
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"
    print(line)
    ACCEPTANCE_LINES.append(line)
    assert ok, line


def test_criterion_1_exact_matches_gaussian_conditioning():
    rng = np.random.default_rng(101)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(50):
        N = int(rng.integers(2, 11))
        D = int(rng.integers(1, 4))
        traj = random_traj(rng, N, D, n_episodes=int(rng.integers(1, 3)))
        params = random_params(rng, D)
        Xs = 3.0 * rng.standard_normal((5, D))
        m, v = predict_exact(fit_exact(traj, params), Xs)
        mr, vr = joint_gaussian_oracle(traj, params, Xs)
        worst = max(worst, rel_err(m, mr), rel_err(v, vr))
    dt = time.perf_counter() - t0
    report(1, worst < 1e-8 and dt < 5, f"max rel err {worst:.2e} (tol 1e-8), {dt:.2f} s (limit 5 s)")


def test_criterion_2_pseudo_inputs_at_data_recover_exact():
    rng = np.random.default_rng(202)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(20):
        N = int(rng.integers(3, 51))
        D = int(rng.integers(1, 4))
        traj = spread_traj(rng, N, D, n_episodes=int(rng.integers(1, 3)))
        params = random_params(rng, D)
        Xs = traj.inputs.max() * rng.random((10, D))
        me, ve = predict_exact(fit_exact(traj, params), Xs)
        ms, vs = predict_sparse(fit_sparse(traj, params, traj.inputs), Xs)
        le, ls = exact_log_marginal(traj, params), log_marginal(traj, params, traj.inputs)
        worst = max(worst, rel_err(ms, me), rel_err(vs, ve), abs(ls - le) / max(1.0, abs(le)))
    dt = time.perf_counter() - t0
    report(2, worst < 1e-6 and dt < 10, f"max rel err {worst:.2e} (tol 1e-6), {dt:.2f} s (limit 10 s)")


def test_criterion_3_gradient_suite():
    rng = np.random.default_rng(303)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(20):
        traj = random_traj(rng, 10, 2, n_episodes=int(rng.integers(1, 3)), scale=2.0)
        params = random_params(rng, 2)
        Z = 2.0 * rng.standard_normal((4, 2))
        g, fd = log_marginal_grad(traj, params, Z), fd_grad(traj, params, Z)
        # relative error per coordinate, floored at 1e-2 for near-zero entries
        worst = max(worst, float(np.max(np.abs(g - fd) / np.maximum(np.abs(fd), 1e-2))))
    dt = time.perf_counter() - t0
    report(3, worst < 1e-4 and dt < 30, f"max rel err {worst:.2e} (tol 1e-4), {dt:.2f} s (limit 30 s)")


@pytest.mark.slow
def test_criterion_4_ratio_trend():
    cfg = config_from_dict({"task": "synthetic_prior"})
    t0 = time.perf_counter()
    rows = np.array(ex.compare_approx(cfg, seed=0), dtype=float)
    dt = time.perf_counter() - t0
    parts, ok = [], True
    for M in np.unique(rows[:, 0]):
        sel = rows[rows[:, 0] == M]
        pre, post = np.median(sel[:, 5]), np.median(sel[:, 6])
        ok &= bool(post >= pre)
        parts.append(f"M={int(M)}: {pre:.3f}->{post:.3f}")
    full = rows[rows[:, 0] == cfg.compare["n_samples"]]
    at_n = float(np.max(np.abs(full[:, 6] - 1.0)))
    ok &= at_n < 1e-6 and dt < 300
    report(4, ok, f"median ratio pre->post {'; '.join(parts)}; |ratio-1| at M=N {at_n:.1e}; {dt:.1f} s")


def test_criterion_5_retention_monotone_and_exact_limit():
    params = config_from_dict({"task": "synthetic_prior"}).model_params()
    rng = np.random.default_rng(505)
    nus = np.logspace(-12, 1, 14)
    monotone, full, worst = True, True, 0.0
    for _ in range(10):
        traj, _ = ex.sample_prior_trajectory(params, 50, rng)
        ret = [fit_lowrank(traj, params, nu).retention_fraction for nu in nus]
        monotone &= all(b <= a for a, b in zip(ret, ret[1:]))
        full &= ret[0] == 1.0
        Xs = 10.0 * rng.random((20, 2))
        me, ve = predict_exact(fit_exact(traj, params), Xs)
        ml, vl = predict_sparse(fit_lowrank(traj, params, 1e-12).posterior, Xs)
        worst = max(worst, rel_err(ml, me), rel_err(vl, ve))
    report(5, monotone and full and worst < 1e-6,
           f"monotone={monotone}, retention at nu=1e-12 is 100%={full}, max rel err vs exact {worst:.1e} (tol 1e-6)")


@pytest.mark.slow
def test_criterion_6_value_landscape_correlation():
    cfg = config_from_dict({"task": "mountain_car", "M": 5})
    t0 = time.perf_counter()
    _, summary = ex.value_landscape(cfg, seed=0)
    dt = time.perf_counter() - t0
    r = summary["pearson"]
    report(6, r >= 0.9 and dt < 120,
           f"pearson {r:.4f} (init {summary['pearson_init']:.4f}, N={summary['n_inputs']}, need >= 0.9), {dt:.1f} s")


@pytest.mark.slow
def test_criterion_7_learning_curves():
    cfg = config_from_dict({"task": "mountain_car", "episodes": 100, "seeds": list(range(10))})
    t0 = time.perf_counter()
    rows = ex.learn(cfg, estimators=["exact", "sparse"])
    dt = time.perf_counter() - t0
    stats = {}
    for est in ("exact", "sparse"):
        first, last = [], []
        for s in cfg.seeds:
            R = np.array([r[2] for r in rows if r[3] == est and r[0] == s])
            first.append(R[:10].mean())
            last.append(R[-10:].mean())
        stats[est] = (np.array(first), np.array(last))
    improved = {k: int(np.sum(v[1] > v[0])) for k, v in stats.items()}
    le, ls = stats["exact"][1], stats["sparse"][1]
    pooled = float(np.sqrt(0.5 * (le.var(ddof=1) + ls.var(ddof=1))))
    gap = float(abs(ls.mean() - le.mean()))
    ok = improved["exact"] >= 8 and improved["sparse"] >= 8 and gap <= pooled and dt < 600
    report(7, ok, f"seeds improved exact {improved['exact']}/10 sparse {improved['sparse']}/10; "
                  f"final exact {le.mean():.2f} sparse {ls.mean():.2f}, gap {gap:.2f} <= pooled sd {pooled:.2f}; {dt:.1f} s")


@pytest.mark.slow
def test_criterion_8_sparse_fit_cost():
    rng = np.random.default_rng(808)
    N, M = 2000, 10
    params = ModelParams(KernelParams.from_natural(1.0, [1.0, 1.0]), 0.1, 0.9)
    traj = Trajectory(10.0 * rng.random((N + 1, 2)), rng.standard_normal(N), (N + 1,))
    Z = 10.0 * rng.random((M, 2))

    def timed(fn, reps):
        ts = []
        for _ in range(reps):
            t0 = time.perf_counter()
            fn()
            ts.append(time.perf_counter() - t0)
        return float(np.median(ts))

    t_exact = timed(lambda: fit_exact(traj, params), 3)
    t_sparse = timed(lambda: fit_sparse(traj, params, Z), 7)
    tracemalloc.start()
    fit_sparse(traj, params, Z)
    _, peak = tracemalloc.get_traced_memory()
    tracemalloc.stop()
    dense = N * N * 8
    speedup = t_exact / t_sparse
    report(8, speedup >= 10 and peak < dense / 10,
           f"speedup {speedup:.0f}x (need >= 10x), sparse peak alloc {peak / 1e6:.2f} MB vs N x N {dense / 1e6:.0f} MB")


def test_criterion_9_small_fit_latency():
    rng = np.random.default_rng(909)
    params = ModelParams(KernelParams.from_natural(1.0, [1.0, 1.0, 1.0]), 0.1, 0.9)
    traj = Trajectory(rng.uniform(-1, 1, (9, 3)), rng.standard_normal(8), (9,))
    Z = traj.inputs[[0, 5]]
    x = rng.uniform(-1, 1, 3)
    ts = []
    for _ in range(200):
        t0 = time.perf_counter()
        post = fit_sparse(traj, params, Z)
        predict_sparse(post, x)
        ts.append(time.perf_counter() - t0)
    med = 1e3 * float(np.median(ts))
    report(9, med < 10, f"median fit+predict {med:.3f} ms (limit 10 ms)")
