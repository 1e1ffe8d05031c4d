"""Rejection-sparsified GPTD baseline with an online dictionary.

Inputs are streamed in time order. An input joins the dictionary when its
conditional variance given the current dictionary exceeds ``nu``; every input
gets a projection row ``a_i = K~^-1 k_dict(x_i)`` computed against the
dictionary at the time it was observed (zero-padded later), so that
``K_qq ~= A K~ A^T``. The value posterior is the GPTD posterior under that
covariance with ``k(x_i, x*) ~= a_i^T k_dict(x*)``, solved in the
dictionary basis.
"""

from dataclasses import dataclass

import numpy as np

from . import kernel
from .linalg import IllConditionedError, jittered_cholesky, tri_solve
from .sparse import LOG_2PI, SparsePosterior
from .trajectory import td_operator


class Dictionary:
    """Active set with an incrementally grown Cholesky factor of its kernel matrix."""

    def __init__(self, kp, capacity=64):
        self.kp = kp
        self._points = np.empty((capacity, kp.dim))
        self._L = np.zeros((capacity, capacity))
        self.size = 0

    @property
    def points(self):
        return self._points[: self.size]

    @property
    def factor(self):
        return self._L[: self.size, : self.size]

    @property
    def kernel_matrix(self):
        return kernel.cov_matrix(self.points, self.points, self.kp)

    def _grow(self):
        cap = 2 * len(self._points)
        pts = np.empty((cap, self.kp.dim))
        pts[: self.size] = self.points
        L = np.zeros((cap, cap))
        L[: self.size, : self.size] = self.factor
        self._points, self._L = pts, L

    def novelty_terms(self, x):
        """``(delta, l, k)`` with ``l = L^-1 k_dict(x)``."""
        kxx = self.kp.signal_variance
        if self.size == 0:
            return kxx, np.zeros(0), np.zeros(0)
        k = kernel.cov_matrix(self.points, x[None, :], self.kp)[:, 0]
        l = tri_solve(self.factor, k)
        return max(kxx - float(l @ l), 0.0), l, k

    def admit(self, x, delta, l):
        if delta <= 0.0:
            raise IllConditionedError("cannot admit a point with zero conditional variance")
        if self.size == len(self._points):
            self._grow()
        n = self.size
        self._points[n] = x
        self._L[n, :n] = l
        self._L[n, n] = np.sqrt(delta)
        self.size += 1


def novelty(x, dictionary):
    """Conditional variance of ``x`` given the dictionary and its projection coefficients."""
    x = np.asarray(x, dtype=float)
    delta, l, _ = dictionary.novelty_terms(x)
    if dictionary.size == 0:
        return delta, np.zeros(0)
    return delta, tri_solve(dictionary.factor, l, trans=True)


@dataclass(frozen=True)
class LowRankFit:
    posterior: SparsePosterior
    retention_fraction: float
    dictionary_inputs: np.ndarray
    projection: np.ndarray  # A, one row per training input
    log_marginal: float


def fit_lowrank(traj, params, nu):
    if not nu > 0:
        raise ValueError("nu must be positive")
    kp = params.kernel
    dic = Dictionary(kp)
    rows = []
    for x in traj.inputs:
        delta, l, _ = dic.novelty_terms(x)
        # the first input is always admitted so the dictionary is never empty
        if dic.size == 0 or delta > nu:
            dic.admit(x, delta, l)
            rows.append(np.eye(1, dic.size, dic.size - 1)[0])
        else:
            rows.append(tri_solve(dic.factor, l, trans=True))
    m = dic.size
    A = np.zeros((traj.n_inputs, m))
    for i, row in enumerate(rows):
        A[i, : len(row)] = row

    op = td_operator(traj, params.discount, params.terminal_value_zero)
    s2 = params.noise_variance
    Lk = dic.factor
    Psi = op.apply(A) @ Lk  # H A L, so H A K~ A^T H^T = Psi Psi^T
    S = s2 * np.eye(m) + Psi.T @ Psi
    LS, _ = jittered_cholesky(S)
    r = traj.rewards
    b = tri_solve(LS, Psi.T @ r)
    inner = tri_solve(LS, b, trans=True)
    alpha = tri_solve(Lk, inner, trans=True)
    Linv = tri_solve(Lk, np.eye(m))
    Sinv = tri_solve(LS, tri_solve(LS, np.eye(m)), trans=True)
    lam = Linv.T @ (np.eye(m) - s2 * Sinv) @ Linv

    # log N(r | 0, Psi Psi^T + s2 I) via the determinant lemma
    n = len(r)
    quad = (r @ r - b @ b) / s2
    logdet = (n - m) * np.log(s2) + 2.0 * np.sum(np.log(np.diag(LS)))
    lml = float(-0.5 * quad - 0.5 * logdet - 0.5 * n * LOG_2PI)

    post = SparsePosterior(alpha, 0.5 * (lam + lam.T), dic.points.copy(), params)
    return LowRankFit(post, m / traj.n_inputs, dic.points.copy(), A, lml)
