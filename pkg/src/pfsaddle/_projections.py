"""Euclidean projections used by the small-scale reference oracles only.

The solvers never call these; they back the exact best responses and the
gap oracle in :mod:`pfsaddle.metrics`.
"""

import numpy as np


def project_simplex(v, total=1.0):
    """Projection onto ``{p >= 0, sum p = total}`` (sort-based)."""
    v = np.asarray(v, dtype=float)
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - total
    ind = np.arange(1, v.size + 1)
    rho = np.nonzero(u - css / ind > 0)[0][-1]
    theta = css[rho] / (rho + 1.0)
    return np.maximum(v - theta, 0.0)


def project_l1_ball(v, radius):
    v = np.asarray(v, dtype=float)
    if np.abs(v).sum() <= radius:
        return v.copy()
    return np.sign(v) * project_simplex(np.abs(v), radius)


def project_l2_ball(v, radius, center=None):
    v = np.asarray(v, dtype=float)
    c = np.zeros_like(v) if center is None else center
    d = v - c
    norm = np.linalg.norm(d)
    if norm <= radius:
        return v.copy()
    return c + d * (radius / norm)


def project_nuclear_ball(X, radius):
    U, s, Vt = np.linalg.svd(X, full_matrices=False)
    if s.sum() <= radius:
        return np.array(X, dtype=float, copy=True)
    s = project_simplex(s, radius)
    return (U * s) @ Vt


def project(fset, p):
    kind = fset.kind
    if kind == "simplex":
        return project_simplex(p)
    if kind == "l2_ball":
        return project_l2_ball(p, fset.radius, fset.center)
    if kind == "nuclear_ball":
        return project_nuclear_ball(p, fset.radius)
    raise ValueError(f"no projection for set kind {kind!r}")
