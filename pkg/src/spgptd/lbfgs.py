"""Limited-memory BFGS with a strong-Wolfe line search.

Written for evidence maximization, where a trial point can make a kernel matrix
numerically singular: such points evaluate to ``+inf`` and the line search
simply shrinks the step. Accepted iterates strictly decrease the objective.
"""

from collections import deque
from dataclasses import dataclass, field

import numpy as np


@dataclass
class LBFGSResult:
    x: np.ndarray
    fun: float
    grad: np.ndarray
    n_iter: int
    n_eval: int
    status: str
    trace: list = field(default_factory=list)


def _safe(fun, x):
    try:
        f, g = fun(x)
    except (np.linalg.LinAlgError, ValueError, FloatingPointError):
        return np.inf, None
    f = float(f)
    if not np.isfinite(f) or g is None or not np.all(np.isfinite(g)):
        return np.inf, None
    return f, np.asarray(g, dtype=float)


def _cubic_min(a, fa, ga, b, fb, gb):
    """Minimizer of the cubic interpolating two points with slopes, or None."""
    d1 = ga + gb - 3.0 * (fa - fb) / (a - b)
    rad = d1 * d1 - ga * gb
    if rad < 0:
        return None
    d2 = np.sign(b - a) * np.sqrt(rad)
    t = b - (b - a) * (gb + d2 - d1) / (gb - ga + 2.0 * d2)
    if not np.isfinite(t):
        return None
    return t


def line_search(fun, x, f0, g0, p, alpha0=1.0, c1=1e-4, c2=0.9, max_eval=30):
    """Strong-Wolfe search along ``p``. Returns ``(alpha, f, g, n_eval)`` or None."""
    dphi0 = float(g0 @ p)
    if dphi0 >= 0:
        return None
    n_eval = 0

    def phi(a):
        nonlocal n_eval
        n_eval += 1
        f, g = _safe(fun, x + a * p)
        return f, g, (float(g @ p) if g is not None else np.nan)

    def zoom(lo, f_lo, d_lo, hi, f_hi, d_hi):
        for _ in range(max_eval):
            if n_eval >= max_eval:
                break
            t = None
            if np.isfinite(f_hi) and np.isfinite(d_hi):
                t = _cubic_min(lo, f_lo, d_lo, hi, f_hi, d_hi)
            lo_b, hi_b = min(lo, hi), max(lo, hi)
            span = hi_b - lo_b
            if t is None or not (lo_b + 0.1 * span <= t <= hi_b - 0.1 * span):
                t = 0.5 * (lo + hi)
            f_t, g_t, d_t = phi(t)
            if not np.isfinite(f_t) or f_t > f0 + c1 * t * dphi0 or f_t >= f_lo:
                hi, f_hi, d_hi = t, f_t, d_t
            else:
                if abs(d_t) <= -c2 * dphi0:
                    return t, f_t, g_t
                if d_t * (hi - lo) >= 0:
                    hi, f_hi, d_hi = lo, f_lo, d_lo
                lo, f_lo, d_lo = t, f_t, d_t
            if abs(hi - lo) < 1e-14 * max(1.0, abs(lo)):
                break
        # fall back to the best sufficient-decrease point seen
        if lo > 0 and f_lo < f0:
            return lo, f_lo, None
        return None

    a_prev, f_prev, d_prev = 0.0, f0, dphi0
    a = alpha0
    for i in range(max_eval):
        f_a, g_a, d_a = phi(a)
        if not np.isfinite(f_a) or f_a > f0 + c1 * a * dphi0 or (i > 0 and f_a >= f_prev):
            res = zoom(a_prev, f_prev, d_prev, a, f_a, d_a)
            break
        if abs(d_a) <= -c2 * dphi0:
            res = (a, f_a, g_a)
            break
        if d_a >= 0:
            res = zoom(a, f_a, d_a, a_prev, f_prev, d_prev)
            break
        a_prev, f_prev, d_prev = a, f_a, d_a
        a = 2.0 * a
    else:
        res = (a_prev, f_prev, None) if a_prev > 0 else None
    if res is None:
        return None
    t, f_t, g_t = res
    if g_t is None:
        f_t, g_t = _safe(fun, x + t * p)
        n_eval += 1
        if not np.isfinite(f_t):
            return None
    return t, f_t, g_t, n_eval


def minimize(fun, x0, max_iter=200, gtol=1e-5, ftol=1e-12, memory=10, callback=None):
    """Minimize ``fun(x) -> (f, grad)`` from ``x0``.

    ``trace`` holds the objective at the start point and after every accepted step.
    """
    x = np.array(x0, dtype=float)
    f, g = _safe(fun, x)
    n_eval = 1
    if not np.isfinite(f):
        return LBFGSResult(x, f, g, 0, n_eval, "infeasible start", [f])
    trace = [f]
    S, Y = deque(maxlen=memory), deque(maxlen=memory)
    status = "max iterations"
    it = 0
    while True:
        if np.max(np.abs(g)) < gtol:
            status = "gradient tolerance"
            break
        if it >= max_iter:
            break
        # two-loop recursion
        q = g.copy()
        coefs = []
        for s, y in reversed(list(zip(S, Y))):
            rho = 1.0 / (y @ s)
            a = rho * (s @ q)
            q -= a * y
            coefs.append((rho, a))
        if S:
            s, y = S[-1], Y[-1]
            q *= (s @ y) / (y @ y)
        else:
            q /= max(1.0, np.linalg.norm(g))
        for (s, y), (rho, a) in zip(zip(S, Y), reversed(coefs)):
            b = rho * (y @ q)
            q += (a - b) * s
        p = -q
        if g @ p >= 0:
            S.clear()
            Y.clear()
            p = -g / max(1.0, np.linalg.norm(g))
        ls = line_search(fun, x, f, g, p)
        if ls is None:
            if S:
                # retry once along steepest descent with fresh curvature memory
                S.clear()
                Y.clear()
                p = -g / max(1.0, np.linalg.norm(g))
                ls = line_search(fun, x, f, g, p)
            if ls is None:
                status = "line search failed"
                break
        t, f_new, g_new, ne = ls
        n_eval += ne
        s = t * p
        y = g_new - g
        if y @ s > 1e-12 * np.linalg.norm(s) * np.linalg.norm(y):
            S.append(s)
            Y.append(y)
        x = x + s
        f_old, f, g = f, f_new, g_new
        it += 1
        trace.append(f)
        if callback is not None:
            callback(x, f)
        if f_old - f <= ftol * max(1.0, abs(f_old)):
            status = "function tolerance"
            break
    return LBFGSResult(x, f, g, it, n_eval, status, trace)
