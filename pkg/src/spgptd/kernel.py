"""Squared-exponential ARD covariance.

    k(x, y) = sf * exp(-0.5 * sum_d (x_d - y_d)**2 * w_d)

``sf`` is the signal variance (it multiplies the exponential directly) and the
per-dimension weights ``w_d = exp(-2 * log_length_scale_d)`` are inverse squared
length scales. Both are stored as logs so optimizers can run unconstrained.
"""

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

# default diagonal inflation relative to sf, used by callers that want it
JITTER = 1e-8


@dataclass(frozen=True, eq=False)
class KernelParams:
    log_signal_variance: float
    log_length_scales: np.ndarray

    def __eq__(self, other):
        if not isinstance(other, KernelParams):
            return NotImplemented
        return (self.log_signal_variance == other.log_signal_variance
                and np.array_equal(self.log_length_scales, other.log_length_scales))

    def __hash__(self):
        return hash((self.log_signal_variance, self.log_length_scales.tobytes()))

    def __post_init__(self):
        ls = np.atleast_1d(np.asarray(self.log_length_scales, dtype=float)).copy()
        ls.setflags(write=False)
        object.__setattr__(self, "log_length_scales", ls)
        object.__setattr__(self, "log_signal_variance", float(self.log_signal_variance))
        if ls.ndim != 1 or ls.size == 0:
            raise ValueError("log_length_scales must be a non-empty vector")
        if not (np.isfinite(self.signal_variance) and self.signal_variance > 0):
            raise ValueError("signal variance must be positive and finite")
        if not np.all(np.isfinite(self.inv_sq_length_scales)) or np.any(self.inv_sq_length_scales <= 0):
            raise ValueError("length scales must be positive and finite")

    @classmethod
    def from_natural(cls, signal_variance, length_scales):
        return cls(np.log(signal_variance), np.log(np.atleast_1d(length_scales)))

    @property
    def dim(self):
        return self.log_length_scales.size

    @property
    def signal_variance(self):
        with np.errstate(over="ignore"):
            return float(np.exp(self.log_signal_variance))

    @property
    def length_scales(self):
        return np.exp(self.log_length_scales)

    @property
    def inv_sq_length_scales(self):
        # extreme trial steps overflow to inf, which validation then rejects
        with np.errstate(over="ignore"):
            return np.exp(-2.0 * self.log_length_scales)

    @property
    def n_params(self):
        return 1 + self.dim

    def to_vector(self):
        return np.concatenate([[self.log_signal_variance], self.log_length_scales])

    @classmethod
    def from_vector(cls, v):
        v = np.asarray(v, dtype=float)
        return cls(v[0], v[1:])


def _check_vec(x, p):
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.size != p.dim:
        raise ValueError(f"expected input of dimension {p.dim}, got shape {x.shape}")
    return x


def _check_mat(A, p):
    A = np.asarray(A, dtype=float)
    if A.ndim == 1:
        A = A.reshape(-1, p.dim) if A.size else A.reshape(0, p.dim)
    if A.ndim != 2 or A.shape[1] != p.dim:
        raise ValueError(f"expected inputs of dimension {p.dim}, got shape {A.shape}")
    return A


def eval(x, y, p):  # noqa: A001 - mirrors the operation name
    x = _check_vec(x, p)
    y = _check_vec(y, p)
    d = x - y
    return p.signal_variance * float(np.exp(-0.5 * np.dot(d * d, p.inv_sq_length_scales)))


def sq_dist(A, B, w):
    """Weighted squared distances ``sum_d w_d (a_d - b_d)^2`` for all row pairs."""
    s = np.sqrt(w)
    return cdist(A * s, B * s, "sqeuclidean")


def cov_matrix(A, B, p):
    A = _check_mat(A, p)
    B = _check_mat(B, p)
    if A is B or (A.shape == B.shape and np.array_equal(A, B)):
        K = p.signal_variance * np.exp(-0.5 * sq_dist(A, A, p.inv_sq_length_scales))
        np.fill_diagonal(K, p.signal_variance)
        return 0.5 * (K + K.T)
    return p.signal_variance * np.exp(-0.5 * sq_dist(A, B, p.inv_sq_length_scales))


def cov_diag(A, p):
    A = _check_mat(A, p)
    return np.full(len(A), p.signal_variance)


def grad_params(x, y, p):
    """Partials of k(x, y) with respect to (log sf, log length scales...)."""
    x = _check_vec(x, p)
    y = _check_vec(y, p)
    k = eval(x, y, p)
    d = x - y
    return np.concatenate([[k], k * d * d * p.inv_sq_length_scales])


def grad_input(x, y, p, which, coord):
    """Partial of k(x, y) with respect to one coordinate of ``x`` or ``y``."""
    x = _check_vec(x, p)
    y = _check_vec(y, p)
    if not 0 <= coord < p.dim:
        raise IndexError(f"coordinate {coord} out of range for dimension {p.dim}")
    g = -p.inv_sq_length_scales[coord] * (x[coord] - y[coord]) * eval(x, y, p)
    if which == "first":
        return g
    if which == "second":
        return -g
    raise ValueError("which must be 'first' or 'second'")


def cov_matrix_grad_params(A, B, p, K=None):
    """Stack of dK/d(log-hyperparameter), shape ``(1 + D, |A|, |B|)``."""
    A = _check_mat(A, p)
    B = _check_mat(B, p)
    if K is None:
        K = cov_matrix(A, B, p)
    w = p.inv_sq_length_scales
    out = np.empty((1 + p.dim,) + K.shape)
    out[0] = K
    for d in range(p.dim):
        diff = A[:, d][:, None] - B[:, d][None, :]
        out[1 + d] = K * diff * diff * w[d]
    return out
