"""Evidence maximization over hyperparameters and pseudo-input locations."""

from dataclasses import dataclass, field

import numpy as np

from . import lbfgs
from .sparse import check_pseudo_inputs, log_marginal_and_grad


class OptimizationFailedError(RuntimeError):
    def __init__(self, msg, best=None):
        super().__init__(msg)
        self.best = best


@dataclass
class OptimConfig:
    max_iterations: int = 200
    gradient_tolerance: float = 1e-5
    regularization_weight: float = 1e-3
    restarts: int = 1
    rng_seed: int = 0
    optimize_hyperparams: bool = True
    optimize_pseudo: bool = True
    restart_scale: float = 0.1

    def __post_init__(self):
        if self.gradient_tolerance <= 0:
            raise ValueError("gradient_tolerance must be positive")
        if self.regularization_weight < 0:
            raise ValueError("regularization_weight must be non-negative")
        if self.restarts < 1:
            raise ValueError("restarts must be at least 1")
        if self.max_iterations < 0:
            raise ValueError("max_iterations must be non-negative")


@dataclass
class OptimResult:
    params: object
    Z: np.ndarray
    value: float
    trace: list = field(default_factory=list)
    n_iter: int = 0
    status: str = ""
    restart: int = 0


def objective(traj, params, Z, cfg):
    """Penalized log marginal and its gradient over ``[hyper..., Z.ravel()]``.

    The penalty is ``weight * (|log-hyperparameters|^2 + |Z|^2)``.
    """
    Z = np.asarray(Z, dtype=float)
    val, grad = log_marginal_and_grad(traj, params, Z)
    w = cfg.regularization_weight
    if w:
        h = params.hyper_vector()
        val -= w * (h @ h + np.sum(Z * Z))
        grad = grad - 2.0 * w * np.concatenate([h, Z.ravel()])
    return val, grad


def _free_mask(params, Z, cfg):
    return np.concatenate([
        np.full(params.n_hyper, bool(cfg.optimize_hyperparams)),
        np.full(Z.size, bool(cfg.optimize_pseudo)),
    ])


def _run(traj, params0, Z0, cfg):
    full0 = np.concatenate([params0.hyper_vector(), Z0.ravel()])
    mask = _free_mask(params0, Z0, cfg)
    nh = params0.n_hyper

    def unpack(v):
        full = full0.copy()
        full[mask] = v
        return params0.with_hyper_vector(full[:nh]), full[nh:].reshape(Z0.shape)

    def fun(v):
        p, Z = unpack(v)
        val, g = objective(traj, p, Z, cfg)
        return -val, -g[mask]

    res = lbfgs.minimize(fun, full0[mask], max_iter=cfg.max_iterations, gtol=cfg.gradient_tolerance)
    p, Z = (params0, Z0) if res.n_iter == 0 else unpack(res.x)
    return OptimResult(p, Z, -res.fun, [-t for t in res.trace], res.n_iter, res.status)


def optimize(traj, init_params, init_Z, cfg):
    """Maximize the penalized evidence; returns the best result across restarts.

    Restart 0 starts at the given point; later restarts perturb it with a
    seeded Gaussian of relative size ``cfg.restart_scale``.
    """
    Z0 = check_pseudo_inputs(init_Z, init_params.dim)
    if not (cfg.optimize_hyperparams or cfg.optimize_pseudo):
        val = objective(traj, init_params, Z0, cfg)[0]
        return OptimResult(init_params, Z0, val, [val], 0, "nothing to optimize")
    rng = np.random.default_rng(cfg.rng_seed)
    scale = np.std(traj.inputs, axis=0) + 1e-12
    best = None
    for k in range(cfg.restarts):
        params, Z = init_params, Z0
        if k > 0:
            if cfg.optimize_pseudo:
                Z = Z0 + cfg.restart_scale * scale * rng.standard_normal(Z0.shape)
            if cfg.optimize_hyperparams:
                h = init_params.hyper_vector() + cfg.restart_scale * rng.standard_normal(init_params.n_hyper)
                params = init_params.with_hyper_vector(h)
        try:
            res = _run(traj, params, check_pseudo_inputs(Z, init_params.dim), cfg)
        except (np.linalg.LinAlgError, ValueError):
            continue
        if not np.isfinite(res.value):
            continue
        res.restart = k
        if best is None or res.value > best.value:
            best = res
    if best is None:
        raise OptimizationFailedError("every restart failed to factorize", None)
    return best


def init_pseudo(traj, M, strategy="random-subset", seed=0, jitter=True):
    """Initial pseudo-input locations drawn from the training inputs."""
    if M < 1:
        raise ValueError("M must be at least 1")
    rng = np.random.default_rng(seed)
    X = traj.inputs
    lo, hi = X.min(axis=0), X.max(axis=0)
    span = np.where(hi > lo, hi - lo, 1.0)
    if strategy == "uniform-range":
        return lo + (hi - lo) * rng.random((M, X.shape[1]))
    if strategy != "random-subset":
        raise ValueError(f"unknown strategy {strategy!r}")
    if not jitter:
        if M > len(X):
            raise ValueError("M exceeds the number of inputs and jitter is disabled")
        return X[rng.permutation(len(X))[:M]].copy()
    U = np.unique(X, axis=0)
    if M <= len(U):
        Z = U[rng.choice(len(U), size=M, replace=False)]
    else:
        Z = np.vstack([U, U[rng.choice(len(U), size=M - len(U), replace=True)]])
    Z = Z + 1e-6 * span * rng.standard_normal(Z.shape)
    # keep every location inside the bounding box of X
    Z = np.clip(Z, lo, hi)
    for _ in range(100):
        try:
            return check_pseudo_inputs(Z, X.shape[1])
        except ValueError:
            Z = np.clip(Z + 1e-4 * span * rng.standard_normal(Z.shape), lo, hi)
    raise ValueError("could not resolve duplicate pseudo inputs")
