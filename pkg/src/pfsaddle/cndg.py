"""Conditional gradient solver for the prox subproblem

    min_{u in set} <r, u> + (beta/2) ||u - q||^2

run until the Wolfe gap drops to ``eta``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover
    numba = None

from .core import NumericalError, check_finite
from .lo_oracles import lo_solve


@dataclass
class CndgResult:
    q_plus: np.ndarray
    iterations: int
    final_gap: float


def default_iteration_cap(beta, eta, diameter):
    return 10 * max(1, math.ceil(beta * diameter**2 / eta))


def cndg(r, q, beta, eta, fset, counters=None, max_iter=None):
    """Frank-Wolfe with exact line search on the quadratic prox model.

    Each loop makes one LO call ``p_t = lo(r + beta (q_t - q))``; the same call
    yields the Wolfe gap ``tau_t = <r + beta (q_t - q), q_t - p_t>``. The
    procedure returns the first ``q_t`` with ``tau_t <= eta``. The step
    ``theta_t = min(1, tau_t / (beta ||q_t - p_t||^2))`` minimizes the model
    along the segment.

    Raises
    ------
    NumericalError
        When ``max_iter`` (default ``10 * ceil(beta D^2 / eta)``) LO calls do
        not certify the tolerance. ``residual`` holds the last gap.
    """
    if not beta > 0 or not eta > 0:
        raise ValueError("cndg needs beta > 0 and eta > 0")
    if max_iter is None:
        max_iter = default_iteration_cap(beta, eta, fset.diameter)
    q = check_finite(q, "q")
    r = check_finite(r, "r")
    if r.shape != fset.shape or q.shape != fset.shape:
        raise ValueError(f"cndg inputs must have shape {fset.shape}")
    q_t = q.copy()
    # the model gradient r + beta (q_t - q) is rebuilt every pass rather than
    # updated, so the returned gap matches a fresh recomputation to rounding
    if fset.kind == "simplex":
        t, tau = _loop_vertices(r.ravel(), q.ravel(), q_t.ravel(), float(beta), float(eta),
                                int(max_iter))
    elif fset.kind == "l2_ball" and r.ndim == 1:
        t, tau = _loop_ball(r, q, q_t, fset.center, fset.radius, float(beta), float(eta),
                            int(max_iter))
    else:
        t, tau = _loop_dense(fset.lo, r, q, q_t, beta, eta, max_iter)
    # one LO call per pass, charged in bulk
    if counters is not None:
        counters.add("lo", t)
    if tau > eta:
        raise NumericalError(f"CndG hit its cap of {max_iter} LO calls (gap {tau:.3e} > {eta:.3e})",
                             residual=tau)
    return CndgResult(q_t, t, tau)


def _loop_dense(lo, r, q, q_t, beta, eta, max_iter):
    """FW passes with exact line search for any LO; updates ``q_t`` in place."""
    tau = math.inf
    for t in range(1, max_iter + 1):
        grad = r + beta * (q_t - q)
        d = lo(grad) - q_t
        tau = -float(np.vdot(grad, d))
        if tau <= eta:
            return t, tau
        theta = min(1.0, tau / (beta * float(np.vdot(d, d))))
        q_t += theta * d
    return max_iter, tau


def _loop_vertices(r, q, q_t, beta, eta, max_iter):
    """Same passes for the simplex, whose LO answers are unit vectors ``e_i``.

    With ``d = e_i - q_t`` the gap is ``<grad, q_t> - grad_i`` and
    ``||d||^2 = ||q_t||^2 - 2 q_ti + 1``, so no dense vertex is built. Ties
    in the LO go to the lowest index, as in :meth:`Simplex.lo`.
    """
    n = r.shape[0]
    grad = np.empty(n)
    tau = np.inf
    for t in range(1, max_iter + 1):
        i = 0
        gq = 0.0
        qq = 0.0
        for j in range(n):
            grad[j] = r[j] + beta * (q_t[j] - q[j])
            gq += grad[j] * q_t[j]
            qq += q_t[j] * q_t[j]
            if grad[j] < grad[i]:
                i = j
        tau = gq - grad[i]
        if tau <= eta:
            return t, tau
        dd = qq - 2.0 * q_t[i] + 1.0
        theta = min(1.0, tau / (beta * dd))
        for j in range(n):
            q_t[j] *= 1.0 - theta
        q_t[i] += theta
    return max_iter, tau


def _loop_ball(r, q, q_t, center, radius, beta, eta, max_iter):
    """Same passes for a Euclidean ball, whose LO is ``c - radius g/||g||``."""
    n = r.shape[0]
    grad = np.empty(n)
    d = np.empty(n)
    tau = np.inf
    for t in range(1, max_iter + 1):
        gg = 0.0
        for j in range(n):
            grad[j] = r[j] + beta * (q_t[j] - q[j])
            gg += grad[j] * grad[j]
        scale = radius / math.sqrt(gg) if gg > 0.0 else 0.0
        tau = 0.0
        dd = 0.0
        for j in range(n):
            d[j] = center[j] - scale * grad[j] - q_t[j]
            tau -= grad[j] * d[j]
            dd += d[j] * d[j]
        if tau <= eta:
            return t, tau
        theta = min(1.0, tau / (beta * dd))
        for j in range(n):
            q_t[j] += theta * d[j]
    return max_iter, tau


if numba is not None:
    _loop_vertices = numba.njit(cache=True)(_loop_vertices)
    _loop_ball = numba.njit(cache=True)(_loop_ball)


def wolfe_gap(r, q, beta, point, fset, counters=None):
    """``max_{x in set} <r + beta (point - q), point - x>``, one LO call."""
    grad = r + beta * (point - q)
    p = lo_solve(fset, grad, counters)
    return float(np.vdot(grad, point - p))
