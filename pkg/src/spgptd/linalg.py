"""Cholesky helpers with jitter escalation."""

import numpy as np
from scipy.linalg import cho_solve, cholesky, solve_triangular

# relative to the mean diagonal; the first attempt is always jitter-free
JITTER_LADDER = (0.0, 1e-8, 1e-6, 1e-4)


class IllConditionedError(np.linalg.LinAlgError):
    """Raised when a matrix stays indefinite after the whole jitter ladder."""


def jittered_cholesky(A, ladder=JITTER_LADDER):
    """Lower Cholesky factor of a symmetric matrix, inflating the diagonal on failure.

    Returns ``(L, jitter)`` where ``jitter`` is the absolute amount added.
    """
    A = np.asarray(A, dtype=float)
    scale = float(np.mean(np.diag(A))) if A.size else 1.0
    if not np.isfinite(scale) or scale <= 0:
        scale = 1.0
    for rel in ladder:
        jitter = rel * scale
        try:
            L = cholesky(A + jitter * np.eye(len(A)), lower=True, check_finite=True)
        except (np.linalg.LinAlgError, ValueError):
            continue
        if np.all(np.isfinite(L)):
            return L, jitter
    raise IllConditionedError(f"matrix of size {len(A)} not positive definite after jitter")


def chol_solve(L, b):
    return cho_solve((L, True), b, check_finite=False)


def tri_solve(L, b, trans=False):
    """Solve ``L x = b`` (or ``L^T x = b`` when ``trans``) for lower-triangular L."""
    return solve_triangular(L, b, lower=True, trans=1 if trans else 0, check_finite=False)


def chol_logdet(L):
    return 2.0 * float(np.sum(np.log(np.diag(L))))
