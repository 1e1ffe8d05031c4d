"""Experiment drivers behind the CLI; each returns rows ready for CSV output."""

import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace

import numpy as np

from . import lbfgs
from .agent import EpsilonGreedy, PIConfig, ValueMode, policy_iteration, predict_mean, run_episode
from .config import TASK_DEFAULTS, config_from_dict
from .envs import make_env
from .exact import exact_log_marginal, exact_log_marginal_grad, fit_exact, predict_exact
from .hyperopt import OptimConfig, init_pseudo, optimize
from .linalg import jittered_cholesky
from .lowrank import fit_lowrank
from .sparse import fit_sparse, log_marginal, predict_sparse
from .trajectory import Trajectory

COMPARE_COLUMNS = ("M", "subset", "L_gptd", "L_pre", "L_post", "ratio_pre", "ratio_post")
RETENTION_COLUMNS = ("source", "nu", "retention_mean", "retention_std")
LEARN_COLUMNS = ("seed", "episode", "total_reward", "estimator", "wall_ms")
LANDSCAPE_COLUMNS = ("s0", "s1", "exact", "sparse_init", "sparse")
BENCH_COLUMNS = ("estimator", "N", "M", "fit_ms", "predict_us")


def n_workers():
    cap = os.environ.get("SPARSE_GPTD_THREADS")
    n = os.cpu_count() or 1
    if cap:
        n = min(n, max(1, int(cap)))
    return n


def pmap(fn, items, workers=None):
    """Order-preserving map over independent cells."""
    items = list(items)
    workers = n_workers() if workers is None else workers
    if workers <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=min(workers, len(items))) as ex:
        return list(ex.map(fn, items))


# --- synthetic prior data -------------------------------------------------

def sample_prior_trajectory(params, n_inputs, rng, input_range=10.0):
    """One episode drawn from the GPTD generative model.

    Inputs are uniform in ``[0, input_range]^D``; ``q ~ N(0, K_qq)`` and
    ``r = H q + noise``.
    """
    from .kernel import cov_matrix
    from .trajectory import td_operator

    X = input_range * rng.random((n_inputs, params.dim))
    L, _ = jittered_cholesky(cov_matrix(X, X, params.kernel))
    q = L @ rng.standard_normal(n_inputs)
    traj0 = Trajectory(X, np.zeros(n_inputs - 1), (n_inputs,))
    op = td_operator(traj0, params.discount)
    r = op.apply(q) + np.sqrt(params.noise_variance) * rng.standard_normal(n_inputs - 1)
    return Trajectory(X, r, (n_inputs,)), q


# --- approximation quality (likelihood ratios) ------------------------------

def _compare_cell(args):
    traj, params, M, subset, seed, l_gptd, max_iter = args
    rng = np.random.default_rng([seed, M, subset])
    idx = np.sort(rng.choice(traj.n_inputs, size=M, replace=False))
    Z = traj.inputs[idx]
    l_pre = log_marginal(traj, params, Z)
    if M < traj.n_inputs:
        cfg = OptimConfig(max_iterations=max_iter, regularization_weight=0.0, optimize_hyperparams=False)
        try:
            l_post = optimize(traj, params, Z, cfg).value
        except (np.linalg.LinAlgError, ValueError, RuntimeError):
            l_post = l_pre
    else:
        l_post = l_pre
    return (M, subset, l_gptd, l_pre, l_post, l_pre / l_gptd, l_post / l_gptd)


def compare_approx(cfg, seed=None):
    """Sparse-to-exact log-likelihood ratios before and after pseudo-input optimization."""
    seed = cfg.seeds[0] if seed is None else seed
    c = cfg.compare
    params = cfg.model_params(c["dim"])
    traj, _ = sample_prior_trajectory(params, c["n_samples"], np.random.default_rng(seed), c["input_range"])
    l_gptd = exact_log_marginal(traj, params)
    cells = [
        (traj, params, min(int(M), traj.n_inputs), k, seed, l_gptd, c["max_iterations"])
        for M in sorted(set(int(m) for m in c["M_grid"]))
        for k in range(c["n_subsets"])
    ]
    return pmap(_compare_cell, cells)


# --- rejection statistics -------------------------------------------------

def _retention_source_trajs(source, n, seed, prior_length, env_overrides=None):
    rng = np.random.default_rng([seed, 7])
    if source == "mountain_car":
        params = config_from_dict({"task": "mountain_car"}).model_params()
        env = make_env("mountain_car", seed=seed, **(env_overrides or {}))
        pol = EpsilonGreedy(np.array([[-1.0], [0.0], [1.0]]), 1.0)
        trajs = []
        for _ in range(n):
            e = run_episode(env, pol, ValueMode.action_value, env.max_steps, rng)
            trajs.append(Trajectory.from_episodes([(e.inputs, e.rewards, e.terminal)]))
        return params, trajs
    params = config_from_dict({"task": "synthetic_prior"}).model_params()
    return params, [sample_prior_trajectory(params, prior_length, rng)[0] for _ in range(n)]


def retention_sweep(cfg, seed=None):
    seed = cfg.seeds[0] if seed is None else seed
    c = cfg.retention
    nus = np.logspace(np.log10(c["nu_min"]), np.log10(c["nu_max"]), int(c["n_nu"]))
    rows = []
    for source in ("mountain_car", "prior"):
        env = cfg.env if cfg.task == "mountain_car" else None
        params, trajs = _retention_source_trajs(source, int(c["n_trajectories"]), seed, int(c["prior_length"]), env)
        if cfg.task == source or (source == "prior" and cfg.task == "synthetic_prior"):
            params = cfg.model_params(trajs[0].dim)
        for nu in nus:
            fr = np.array([fit_lowrank(t, params, nu).retention_fraction for t in trajs])
            rows.append((source, float(nu), float(fr.mean()), float(fr.std())))
    return rows


# --- policy iteration -----------------------------------------------------

def input_dim(cfg):
    env = make_env(cfg.task, **cfg.env)
    return env.state_dim + (env.action_dim if ValueMode(cfg.mode) is ValueMode.action_value else 0)


def pi_config(cfg, seed, estimator=None):
    a = cfg.agent
    env_steps = cfg.env.get("max_steps")
    return PIConfig(
        params=cfg.model_params(input_dim(cfg)),
        estimator=estimator or cfg.estimator,
        mode=ValueMode(cfg.mode),
        episodes=cfg.episodes,
        max_steps=env_steps,
        M=cfg.M,
        nu=cfg.nu,
        optim=replace(cfg.optim_config(), rng_seed=seed),
        refit_every_k_episodes=a["refit_every_k_episodes"],
        window=a["window"],
        n_eval_states=a["n_eval_states"],
        min_episodes=a.get("min_episodes", 10),
        grid_size=a.get("grid_size", 100),
        seed=seed,
        policy=cfg.make_policy(),
    )


def _learn_one(args):
    cfg, seed, estimator = args
    env = make_env(cfg.task, seed=seed, **cfg.env)
    res = policy_iteration(env, estimator, pi_config(cfg, seed, estimator))
    return [(seed, i, r, estimator, w) for i, (r, w) in enumerate(zip(res.rewards, res.wall_ms))]


def learn(cfg, estimators=None):
    """Learning curves, one row per (seed, episode), grouped by estimator then seed."""
    if cfg.task == "synthetic_prior":
        raise ValueError("learning needs an environment task")
    estimators = estimators or [cfg.estimator]
    cells = [(cfg, s, est) for est in estimators for s in cfg.seeds]
    return [row for rows in pmap(_learn_one, cells) for row in rows]


# --- value landscape ------------------------------------------------------

def fit_exact_hyperparams(traj, params, max_iter=100, regularization_weight=0.0):
    """Evidence maximization of the kernel and noise under the exact model."""
    w = regularization_weight

    def f(h):
        p = params.with_hyper_vector(h)
        return (-exact_log_marginal(traj, p) + w * h @ h,
                -exact_log_marginal_grad(traj, p) + 2.0 * w * h)

    res = lbfgs.minimize(f, params.hyper_vector(), max_iter=max_iter)
    return params.with_hyper_vector(res.x) if res.n_iter else params


def value_landscape(cfg, seed=None):
    """Exact vs sparse value predictions on a state grid under shared hyperparameters.

    Data are random-policy rollouts; hyperparameters come from exact evidence
    maximization; the sparse model then optimizes only its pseudo inputs.
    Returns ``(rows, summary)``.
    """
    seed = cfg.seeds[0] if seed is None else seed
    c = cfg.landscape
    mode = ValueMode(cfg.mode)
    env = make_env(cfg.task, seed=seed, **cfg.env)
    rng = np.random.default_rng(seed)
    policy = replace(cfg.make_policy(), epsilon=1.0)
    eps = [run_episode(env, policy, mode, env.max_steps, rng) for _ in range(int(c["n_episodes"]))]
    traj = Trajectory.from_episodes([(e.inputs, e.rewards, e.terminal) for e in eps])
    params = fit_exact_hyperparams(traj, cfg.model_params(traj.dim))
    Z0 = init_pseudo(traj, cfg.M, "random-subset", seed=seed)
    ocfg = OptimConfig(optimize_hyperparams=False, restarts=int(c.get("restarts", 3)), rng_seed=seed,
                       max_iterations=300, regularization_weight=0.0)
    Z = optimize(traj, params, Z0, ocfg).Z
    post_e = fit_exact(traj, params)
    post_s0 = fit_sparse(traj, params, Z0)
    post_s = fit_sparse(traj, params, Z)

    n = int(c["grid"])
    (a0, b0), (a1, b1) = c["bounds"]
    G0, G1 = np.meshgrid(np.linspace(a0, b0, n), np.linspace(a1, b1, n), indexing="ij")
    start = np.array(env.cfg.start, dtype=float)
    states = np.tile(start, (n * n, 1))
    states[:, 0], states[:, 1] = G0.ravel(), G1.ravel()

    def grid_values(post):
        if mode is ValueMode.state_value:
            return predict_mean(post, states)
        acts = _landscape_actions(cfg, policy)
        return np.max([predict_mean(post, np.hstack([states, np.tile(a, (len(states), 1))])) for a in acts], axis=0)

    ve, vs0, vs = grid_values(post_e), grid_values(post_s0), grid_values(post_s)
    rows = [tuple(r) for r in np.column_stack([states[:, 0], states[:, 1], ve, vs0, vs]).tolist()]
    summary = {
        "pearson": float(np.corrcoef(ve, vs)[0, 1]),
        "pearson_init": float(np.corrcoef(ve, vs0)[0, 1]),
        "n_inputs": traj.n_inputs,
        "params": params.to_dict(),
        "Z": Z.tolist(),
    }
    return rows, summary


def _landscape_actions(cfg, policy):
    if isinstance(policy, EpsilonGreedy):
        return policy.actions
    lo, hi = np.asarray(policy.action_low), np.asarray(policy.action_high)
    grids = np.meshgrid(*[np.linspace(l, h, 5) for l, h in zip(lo, hi)], indexing="ij")
    return np.column_stack([g.ravel() for g in grids])


# --- timing ---------------------------------------------------------------

def _timed(fn, reps):
    out = []
    for _ in range(reps):
        t0 = time.perf_counter()
        res = fn()
        out.append(time.perf_counter() - t0)
    return float(np.median(out)), res


def bench(cfg, seed=None):
    seed = cfg.seeds[0] if seed is None else seed
    c = cfg.bench
    reps = int(c["reps"])
    params = cfg.model_params(c.get("dim", 2))
    rows = []
    rng = np.random.default_rng(seed)
    for N in c["N_grid"]:
        N = int(N)
        X = 10.0 * rng.random((N + 1, params.dim))
        traj = Trajectory(X, rng.standard_normal(N), (N + 1,))
        Xq = 10.0 * rng.random((int(c["n_queries"]), params.dim))
        t_fit, post = _timed(lambda: fit_exact(traj, params), reps)
        t_pred, _ = _timed(lambda: predict_exact(post, Xq), reps)
        rows.append(("exact", N, 0, 1e3 * t_fit, 1e6 * t_pred / len(Xq)))
        for M in c["M_grid"]:
            Z = init_pseudo(traj, int(M), seed=seed)
            t_fit, post = _timed(lambda: fit_sparse(traj, params, Z), reps)
            t_pred, _ = _timed(lambda: predict_sparse(post, Xq), reps)
            rows.append(("sparse", N, int(M), 1e3 * t_fit, 1e6 * t_pred / len(Xq)))
    return rows


__all__ = [
    "compare_approx", "retention_sweep", "learn", "value_landscape", "bench",
    "sample_prior_trajectory", "fit_exact_hyperparams", "TASK_DEFAULTS",
]
