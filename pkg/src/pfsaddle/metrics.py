"""Solution-quality measures: the Frank-Wolfe gap and a certified primal-dual gap."""

from __future__ import annotations

import math

import numpy as np

from . import _projections
from .core import NumericalError
from .lo_oracles import lo_solve

#: Largest coordinate count per block accepted by :func:`primal_dual_gap`.
ORACLE_MAX_DIM = 64


def fw_gap(f, x, y, counters=None):
    """``max_u <x - u, grad_x f> + max_v <y - v, -grad_y f>``.

    Uses one gradient evaluation (charged as FO) and two LO calls. The value
    upper-bounds the primal-dual gap at ``(x, y)``.
    """
    gx, gy = f.grad(x, y)
    if counters is not None:
        counters.add("fo")
    u = lo_solve(f.set_x, gx, counters)
    v = lo_solve(f.set_y, -gy, counters)
    return float(np.vdot(gx, x - u) + np.vdot(gy, v - y))


def _block_dim(fset):
    kind = getattr(fset, "kind", None)
    if kind == "nuclear_ball":
        return max(fset.rows, fset.cols)
    return fset.dim


def _fista_with_certificate(value, grad, fset, start, L, tol, max_iter):
    """Minimize a smooth convex function over ``fset`` by accelerated
    projected gradient until the Frank-Wolfe gap at the iterate is <= ``tol``.

    Returns ``(point, value, gap)``; ``value - gap`` is a certified lower
    bound on the minimum.
    """
    x = np.array(start, dtype=float, copy=True)
    w = x.copy()
    t = 1.0
    gap = math.inf
    for _ in range(max_iter):
        g = grad(x)
        gap = float(np.vdot(g, x - fset.lo(g)))
        if gap <= tol:
            return x, value(x), gap
        gw = grad(w)
        x_new = _projections.project(fset, w - gw / L)
        t_new = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
        w = x_new + ((t - 1.0) / t_new) * (x_new - x)
        # restart when the objective goes up (keeps monotone behaviour)
        if value(x_new) > value(x):
            w = x_new
            t_new = 1.0
        x, t = x_new, t_new
    raise NumericalError(f"gap oracle did not certify {tol:.1e} (gap {gap:.3e})", residual=gap)


def max_y_value(f, x, tol, max_iter=200000):
    """Certified upper bound on ``max_y f(x, y)`` within ``tol`` of the truth."""
    y_star = f.best_response_y(x)
    if y_star is not None:
        return f.value(x, y_star)
    L = f.constants.L
    y0 = f.set_y.canonical_point()
    y, val, gap = _fista_with_certificate(lambda y: -f.value(x, y), lambda y: -f.grad_y(x, y),
                                          f.set_y, y0, L, tol, max_iter)
    return -val + gap


def min_x_value(f, y, tol, max_iter=200000):
    """Certified lower bound on ``min_x f(x, y)`` within ``tol`` of the truth."""
    if f.linear_in_x:
        g = f.grad_x(f.set_x.canonical_point(), y)
        return f.value(f.set_x.lo(g), y)
    L = f.constants.L
    x0 = f.set_x.canonical_point()
    x, val, gap = _fista_with_certificate(lambda x: f.value(x, y), lambda x: f.grad_x(x, y),
                                          f.set_x, x0, L, tol, max_iter)
    return val - gap


def primal_dual_gap(f, x, y, accuracy=1e-9):
    """``max_y f(x, .) - min_x f(., y)`` for small problems.

    The inner problems are solved to ``accuracy / 4`` each and the returned
    value is a certified upper bound: it lies in
    ``[true gap, true gap + accuracy / 2]`` up to floating-point rounding.
    Closed forms are used when available (exact best response in ``y``,
    a single LO when ``f`` is affine in ``x``).

    Raises
    ------
    ValueError
        When either block has more than 64 coordinates per dimension.
    """
    if not accuracy > 0:
        raise ValueError("accuracy must be positive")
    if _block_dim(f.set_x) > ORACLE_MAX_DIM or _block_dim(f.set_y) > ORACLE_MAX_DIM:
        raise ValueError(f"primal_dual_gap supports blocks of at most {ORACLE_MAX_DIM} per dimension")
    return max_y_value(f, x, accuracy / 4) - min_x_value(f, y, accuracy / 4)
