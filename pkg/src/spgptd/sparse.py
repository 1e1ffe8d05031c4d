"""Sparse pseudo-input GPTD for action values (SARSA inputs) or state values.

Latent values are conditioned on M pseudo values ``u`` at locations ``Z`` which
are then marginalized. With ``K_ru = H K_qu`` the reward likelihood becomes

    r | u ~ N(K_ru K_uu^-1 u, Lam),   Lam = diag(K_rr - K_ru K_uu^-1 K_ur) + s2 I

and the predictive value posterior at x* is

    mean = k_u*^T alpha,   alpha  = M^-1 K_ur Lam^-1 r
    var  = k** - k_u*^T lambda k_u*,  lambda = K_uu^-1 - M^-1
    M    = K_uu + K_ur Lam^-1 K_ru

Everything is computed through ``V = L_uu^-1 K_ur`` and the M x M matrix
``A = I + V Lam^-1 V^T`` (so ``M = L_uu A L_uu^T``); nothing of size N x N is
ever formed.
"""

from dataclasses import dataclass

import numpy as np

from . import kernel
from .linalg import IllConditionedError, chol_solve, jittered_cholesky, tri_solve
from .trajectory import ModelParams, td_operator

LOG_2PI = np.log(2.0 * np.pi)
MIN_SEPARATION = 1e-10


class DuplicatePseudoInputError(ValueError):
    pass


def check_pseudo_inputs(Z, dim=None):
    """Validate a pseudo-input set and return it as an ``(M, D)`` array."""
    Z = np.array(Z, dtype=float)
    if Z.ndim == 1:
        Z = Z[:, None] if dim == 1 else Z[None, :]
    if Z.ndim != 2 or len(Z) < 1:
        raise ValueError("need at least one pseudo input")
    if dim is not None and Z.shape[1] != dim:
        raise ValueError(f"pseudo inputs have dimension {Z.shape[1]}, expected {dim}")
    if not np.all(np.isfinite(Z)):
        raise ValueError("pseudo inputs must be finite")
    if len(Z) > 1:
        from scipy.spatial.distance import pdist

        if pdist(Z).min() < MIN_SEPARATION:
            raise DuplicatePseudoInputError("two pseudo inputs closer than 1e-10")
    return Z


def _kernel_params(p):
    return p.kernel if isinstance(p, ModelParams) else p


def latent_likelihood_moments(x, Z, p):
    """Weights ``K_uu^-1 k_u`` on the pseudo values and the conditional variance of Q(x)."""
    kp = _kernel_params(p)
    Z = check_pseudo_inputs(Z, kp.dim)
    x = np.asarray(x, dtype=float)
    Luu, _ = jittered_cholesky(kernel.cov_matrix(Z, Z, kp))
    ku = kernel.cov_matrix(Z, x[None, :], kp)[:, 0]
    weights = chol_solve(Luu, ku)
    v = tri_solve(Luu, ku)
    return weights, max(kp.signal_variance - float(v @ v), 0.0)


def _pair_cov(X, src, dst, kp):
    d = X[src] - X[dst]
    return kp.signal_variance * np.exp(-0.5 * (d * d) @ kp.inv_sq_length_scales)


@dataclass
class FitWorkspace:
    """Intermediate quantities of one sparse fit; all at most N x M."""

    Z: np.ndarray
    op: object
    Kuu: np.ndarray
    Luu: np.ndarray
    Kqu: np.ndarray
    Kru: np.ndarray
    V: np.ndarray  # L_uu^-1 K_ur
    krr_diag: np.ndarray
    pair_k: np.ndarray  # k(x_src, x_dst) per transition
    Q_diag: np.ndarray
    lam: np.ndarray  # Q_diag + s2
    A: np.ndarray
    LA: np.ndarray

    @property
    def M_matrix(self):
        return self.Kuu + (self.Kru / self.lam[:, None]).T @ self.Kru

    @property
    def M_factor(self):
        """Lower triangular factor of ``M_matrix``."""
        return self.Luu @ self.LA


def build_workspace(traj, params, Z):
    kp = params.kernel
    if traj.dim != kp.dim:
        raise ValueError(f"trajectory dimension {traj.dim} != kernel dimension {kp.dim}")
    Z = check_pseudo_inputs(Z, kp.dim)
    op = td_operator(traj, params.discount, params.terminal_value_zero)
    X = traj.inputs
    Kuu = kernel.cov_matrix(Z, Z, kp)
    Luu, _ = jittered_cholesky(Kuu)
    Kqu = kernel.cov_matrix(X, Z, kp)
    Kru = op.apply(Kqu)
    V = tri_solve(Luu, Kru.T)
    sf = kp.signal_variance
    pair_k = _pair_cov(X, op.src, op.dst, kp)
    c = op.coef
    krr_diag = sf - 2.0 * c * pair_k + c * c * sf
    Q = np.maximum(krr_diag - np.einsum("ij,ij->j", V, V), 0.0)
    lam = Q + params.noise_variance
    Vs = V / np.sqrt(lam)
    A = np.eye(len(Z)) + Vs @ Vs.T
    LA, _ = jittered_cholesky(A)
    return FitWorkspace(Z, op, Kuu, Luu, Kqu, Kru, V, krr_diag, pair_k, Q, lam, A, LA)


@dataclass(frozen=True)
class SparsePosterior:
    """Input-independent predictive parameters over a set of support points.

    The same form also carries the low-rank baseline (support = dictionary) and
    an exact posterior rewritten over all training inputs.
    """

    alpha: np.ndarray
    lam: np.ndarray
    Z: np.ndarray
    params: ModelParams

    def __post_init__(self):
        for name in ("alpha", "lam", "Z"):
            a = np.array(getattr(self, name), dtype=float)
            a.setflags(write=False)
            object.__setattr__(self, name, a)

    @property
    def lambda_(self):
        return self.lam

    def to_dict(self):
        return {
            "alpha": self.alpha.tolist(),
            "lambda": self.lam.tolist(),
            "Z": self.Z.tolist(),
            "params": self.params.to_dict(),
        }

    @classmethod
    def from_dict(cls, d):
        Z = np.asarray(d["Z"], dtype=float)
        return cls(
            np.asarray(d["alpha"], dtype=float),
            np.asarray(d["lambda"], dtype=float).reshape(len(Z), len(Z)),
            Z,
            ModelParams.from_dict(d["params"]),
        )


def _posterior_from_workspace(ws, rewards, params):
    b = ws.V @ (rewards / ws.lam)
    alpha = tri_solve(ws.Luu, chol_solve(ws.LA, b), trans=True)
    Ainv = chol_solve(ws.LA, np.eye(len(ws.Z)))
    middle = np.eye(len(ws.Z)) - Ainv
    Linv = tri_solve(ws.Luu, np.eye(len(ws.Z)))
    lam = Linv.T @ middle @ Linv
    return SparsePosterior(alpha, 0.5 * (lam + lam.T), ws.Z, params)


def fit_sparse(traj, params, Z):
    ws = build_workspace(traj, params, Z)
    return _posterior_from_workspace(ws, traj.rewards, params)


def predict_sparse(post, xs, return_var=True, clamp=True):
    xs = np.asarray(xs, dtype=float)
    single = xs.ndim == 1
    Xs = xs[None, :] if single else xs
    kp = post.params.kernel
    if Xs.shape[1] != kp.dim:
        raise ValueError(f"query dimension {Xs.shape[1]} != {kp.dim}")
    Ku = kernel.cov_matrix(post.Z, Xs, kp)
    mean = Ku.T @ post.alpha
    if not return_var:
        return float(mean[0]) if single else mean
    var = kp.signal_variance - np.einsum("ij,ij->j", Ku, post.lam @ Ku)
    if clamp:
        var = np.maximum(var, 0.0)
    if single:
        return float(mean[0]), float(var[0])
    return mean, var


def pseudo_posterior(traj, params, Z):
    """Mean and covariance of the pseudo values given the rewards."""
    ws = build_workspace(traj, params, Z)
    b = ws.V @ (traj.rewards / ws.lam)
    mean = ws.Luu @ chol_solve(ws.LA, b)
    W = tri_solve(ws.LA, ws.Luu.T)
    cov = W.T @ W
    return mean, 0.5 * (cov + cov.T)


def _lml_terms(ws, r):
    Vl = ws.V / ws.lam
    c = tri_solve(ws.LA, Vl @ r)
    quad = float(r @ (r / ws.lam) - c @ c)
    logdet = float(np.sum(np.log(ws.lam)) + 2.0 * np.sum(np.log(np.diag(ws.LA))))
    val = -0.5 * quad - 0.5 * logdet - 0.5 * len(r) * LOG_2PI
    if not np.isfinite(val):
        raise IllConditionedError("non-finite log marginal")
    return val, Vl, c


def log_marginal(traj, params, Z):
    """log N(r | 0, Lam + K_ru K_uu^-1 K_ur) in O(N M^2)."""
    ws = build_workspace(traj, params, Z)
    return _lml_terms(ws, traj.rewards)[0]


def log_marginal_and_grad(traj, params, Z):
    """Log marginal and its gradient.

    Gradient layout: ``[log sf, log length scales (D), log s2, Z.ravel() (M*D)]``.

    With ``W = beta beta^T - K_r^-1`` (``beta = K_r^-1 r``) and ``B = K_uu^-1 K_ur``
    the derivative along any variable is

        1/2 sum_t w_t d(K_rr)_tt + 1/2 d(s2) sum_t w_t
          + tr(C dK_ru) - 1/2 tr(E dK_uu),

    where ``w = diag(W)``, ``C = B (W - diag w)`` and ``E = C B^T``. The diagonal
    of the Q correction cancels the diagonal of the low-rank term, which is why
    only the off-diagonal part of W reaches K_ru and K_uu.
    """
    ws = build_workspace(traj, params, Z)
    r = traj.rewards
    kp = params.kernel
    val, Vl, c = _lml_terms(ws, r)
    Z = ws.Z
    Mn, D = Z.shape

    # beta = K_r^-1 r and diag(K_r^-1) via the M x M capacitance factor
    P = tri_solve(ws.LA, Vl)  # LA^-1 V Lam^-1
    beta = r / ws.lam - Vl.T @ tri_solve(ws.LA, c, trans=True)
    kinv_diag = 1.0 / ws.lam - np.einsum("ij,ij->j", P, P)
    w = beta * beta - kinv_diag

    B = tri_solve(ws.Luu, ws.V, trans=True)  # K_uu^-1 K_ur
    # B K_r^-1 = B Lam^-1 - (B Vl^T) A^-1 Vl
    BKinv = B / ws.lam - (B @ Vl.T) @ chol_solve(ws.LA, Vl)
    C = np.outer(B @ beta, beta) - BKinv - B * w
    E = C @ B.T
    E = 0.5 * (E + E.T)
    G = ws.op.apply_t(C.T)  # dL/dK_qu, shape (N_in, M)

    X = traj.inputs
    wsq = kp.inv_sq_length_scales
    grad = np.empty(kp.n_params + 1 + Mn * D)
    grad[0] = 0.5 * w @ ws.krr_diag + np.sum(G * ws.Kqu) - 0.5 * np.sum(E * ws.Kuu)
    dsrc = X[ws.op.src] - X[ws.op.dst]
    for d in range(D):
        dq = X[:, d][:, None] - Z[:, d][None, :]
        du = Z[:, d][:, None] - Z[:, d][None, :]
        dkrr = -2.0 * ws.op.coef * ws.pair_k * dsrc[:, d] ** 2 * wsq[d]
        grad[1 + d] = (
            0.5 * w @ dkrr
            + np.sum(G * ws.Kqu * dq * dq) * wsq[d]
            - 0.5 * np.sum(E * ws.Kuu * du * du) * wsq[d]
        )
    grad[kp.n_params] = 0.5 * params.noise_variance * np.sum(w)

    # pseudo-input coordinates: dk(x, z)/dz_d = w_d (x_d - z_d) k(x, z)
    gz = np.empty((Mn, D))
    for d in range(D):
        dq = X[:, d][:, None] - Z[:, d][None, :]
        du = Z[:, d][:, None] - Z[:, d][None, :]
        gz[:, d] = wsq[d] * (
            np.sum(G * ws.Kqu * dq, axis=0) + np.sum(E * ws.Kuu * du, axis=1)
        )
    grad[kp.n_params + 1:] = gz.ravel()
    return val, grad


def log_marginal_grad(traj, params, Z):
    return log_marginal_and_grad(traj, params, Z)[1]
