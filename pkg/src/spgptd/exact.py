"""Exact GPTD posterior for action values (SARSA inputs) or state values.

Rewards are modelled as ``r = H q + eps`` with ``q ~ GP(0, k)`` and i.i.d. noise,
so ``r ~ N(0, K_rr + s2 I)`` with ``K_rr = H K_qq H^T``. Costs O(N^3).
"""

from dataclasses import dataclass

import numpy as np

from . import kernel
from .linalg import IllConditionedError, chol_logdet, chol_solve, jittered_cholesky, tri_solve
from .trajectory import td_operator

LOG_2PI = np.log(2.0 * np.pi)


@dataclass(frozen=True)
class ExactPosterior:
    weights: np.ndarray  # (K_rr + s2 I)^-1 r
    factor: np.ndarray  # lower Cholesky factor of K_rr + s2 I
    inputs: np.ndarray
    params: object
    op: object = None
    jitter: float = 0.0

    @classmethod
    def prior(cls, params):
        return cls(np.zeros(0), np.zeros((0, 0)), np.zeros((0, params.dim)), params, None)

    @property
    def n_transitions(self):
        return len(self.weights)

    def cross_cov(self, Xs):
        """``k_{r*}`` for every query row: shape (N, n_query)."""
        Ks = kernel.cov_matrix(self.inputs, Xs, self.params.kernel)
        return self.op.apply(Ks)


def _rr_cov(traj, params):
    op = td_operator(traj, params.discount, params.terminal_value_zero)
    Kqq = kernel.cov_matrix(traj.inputs, traj.inputs, params.kernel)
    Krr = op.apply(op.apply(Kqq).T)
    return op, Kqq, 0.5 * (Krr + Krr.T)


def fit_exact(traj, params):
    if traj.dim != params.dim:
        raise ValueError(f"trajectory dimension {traj.dim} != kernel dimension {params.dim}")
    op, _, Krr = _rr_cov(traj, params)
    C = Krr + params.noise_variance * np.eye(len(Krr))
    L, jitter = jittered_cholesky(C)
    w = chol_solve(L, traj.rewards)
    return ExactPosterior(w, L, traj.inputs, params, op, jitter)


def predict_exact(post, xs, return_var=True):
    """Posterior mean and variance of the latent value at ``xs``.

    ``xs`` may be one input vector (scalars returned) or a stack of them.
    """
    xs = np.asarray(xs, dtype=float)
    single = xs.ndim == 1
    Xs = xs[None, :] if single else xs
    if Xs.shape[1] != post.params.dim:
        raise ValueError(f"query dimension {Xs.shape[1]} != {post.params.dim}")
    prior_var = kernel.cov_diag(Xs, post.params.kernel)
    if post.n_transitions == 0:
        mean, var = np.zeros(len(Xs)), prior_var
    else:
        Kr = post.cross_cov(Xs)
        mean = Kr.T @ post.weights
        if return_var:
            V = tri_solve(post.factor, Kr)
            var = np.maximum(prior_var - np.einsum("ij,ij->j", V, V), 0.0)
    if not return_var:
        return float(mean[0]) if single else mean
    if single:
        return float(mean[0]), float(var[0])
    return mean, var


def exact_log_marginal(traj, params):
    """log N(r | 0, K_rr + s2 I) by dense factorization."""
    _, _, Krr = _rr_cov(traj, params)
    C = Krr + params.noise_variance * np.eye(len(Krr))
    L, _ = jittered_cholesky(C)
    a = tri_solve(L, traj.rewards)
    val = -0.5 * a @ a - 0.5 * chol_logdet(L) - 0.5 * len(a) * LOG_2PI
    if not np.isfinite(val):
        raise IllConditionedError("non-finite log marginal")
    return float(val)


def exact_log_marginal_grad(traj, params):
    """Gradient over (log sf, log length scales, log s2) of the exact log marginal."""
    op, Kqq, Krr = _rr_cov(traj, params)
    C = Krr + params.noise_variance * np.eye(len(Krr))
    L, _ = jittered_cholesky(C)
    beta = chol_solve(L, traj.rewards)
    Cinv = chol_solve(L, np.eye(len(C)))
    W = np.outer(beta, beta) - Cinv
    dK = kernel.cov_matrix_grad_params(traj.inputs, traj.inputs, params.kernel, Kqq)
    g = np.empty(params.n_hyper)
    for j, dKqq in enumerate(dK):
        dKrr = op.apply(op.apply(dKqq).T)
        g[j] = 0.5 * np.sum(W * dKrr)
    g[-1] = 0.5 * params.noise_variance * np.trace(W)
    return g


def support_form(post):
    """Rewrite the exact posterior over its training inputs.

    ``mean = k_*^T H^T w`` and ``var = k** - k_*^T H^T C^-1 H k_*``, so the
    result predicts exactly like ``post`` through the sparse prediction path.
    """
    from .sparse import SparsePosterior

    alpha = post.op.apply_t(post.weights)
    B = tri_solve(post.factor, post.op.to_sparse().toarray())
    return SparsePosterior(alpha, B.T @ B, post.inputs, post.params)
