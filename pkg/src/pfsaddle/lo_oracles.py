"""Feasible sets and their linear minimization oracles.

Every set exposes ``lo(g)`` returning ``argmin_{v in set} <v, g>``. The
nuclear-norm ball oracle only needs the top singular pair of ``g``, which is
found by alternating power iteration so sparse gradients never get densified
into an SVD.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .core import MEMBERSHIP_TOL, NumericalError, OracleCounters, make_rng

#: Largest matrix (per side) for which nuclear-ball membership is checked.
NUCLEAR_MEMBERSHIP_MAX = 64

#: Use the Gram-matrix warm start when the smaller side is at most this.
GRAM_MAX = 256

#: Power-iteration attempts made by the nuclear-ball LO before giving up.
LO_ATTEMPTS = 3


class FeasibleSet:
    """Convex compact set with a linear minimization oracle."""

    kind: str
    shape: tuple
    diameter: float

    def lo(self, g: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def contains(self, p, tol: float = MEMBERSHIP_TOL) -> bool:
        raise NotImplementedError

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        """A random feasible point (used for property checks and estimation)."""
        raise NotImplementedError

    def canonical_point(self) -> np.ndarray:
        return self.lo(np.zeros(self.shape))

    def describe(self) -> dict:
        raise NotImplementedError


class Simplex(FeasibleSet):
    """Probability simplex ``{p >= 0, sum(p) = 1}``."""

    kind = "simplex"

    def __init__(self, dim: int):
        if dim < 1:
            raise ValueError("simplex dimension must be >= 1")
        self.dim = int(dim)
        self.shape = (self.dim,)
        self.diameter = math.sqrt(2.0)

    def lo(self, g):
        v = np.zeros(self.dim)
        # argmin returns the lowest index among ties
        v[int(np.argmin(g))] = 1.0
        return v

    def contains(self, p, tol=MEMBERSHIP_TOL):
        p = np.asarray(p, dtype=float)
        return bool(np.all(p >= -tol) and abs(p.sum() - 1.0) <= tol)

    def sample(self, rng):
        return rng.dirichlet(np.ones(self.dim))

    def describe(self):
        return {"kind": self.kind, "dim": self.dim, "diameter": self.diameter}


class L2Ball(FeasibleSet):
    """Euclidean ball ``{p : ||p - center|| <= radius}``."""

    kind = "l2_ball"

    def __init__(self, dim: int, radius: float = 1.0, center=None):
        if dim < 1 or not radius > 0:
            raise ValueError("l2 ball needs dim >= 1 and radius > 0")
        self.dim = int(dim)
        self.radius = float(radius)
        self.center = np.zeros(self.dim) if center is None else np.asarray(center, dtype=float).copy()
        if self.center.shape != (self.dim,):
            raise ValueError("center shape does not match dim")
        self.shape = (self.dim,)
        self.diameter = 2.0 * self.radius

    def lo(self, g):
        norm = np.linalg.norm(g)
        if norm == 0.0:
            return self.center.copy()
        return self.center - (self.radius / norm) * g

    def contains(self, p, tol=MEMBERSHIP_TOL):
        p = np.asarray(p, dtype=float)
        return bool(np.linalg.norm(p - self.center) <= self.radius + tol)

    def sample(self, rng):
        d = rng.standard_normal(self.dim)
        d /= np.linalg.norm(d)
        return self.center + self.radius * rng.uniform() ** (1.0 / self.dim) * d

    def describe(self):
        return {"kind": self.kind, "dim": self.dim, "radius": self.radius,
                "center": self.center.tolist(), "diameter": self.diameter}


@dataclass(frozen=True)
class RankOne:
    """Factored rank-one matrix ``scale * outer(u, v)``."""

    scale: float
    u: np.ndarray
    v: np.ndarray

    def densify(self) -> np.ndarray:
        return self.scale * np.outer(self.u, self.v)


class NuclearBall(FeasibleSet):
    """Matrices with nuclear norm at most ``radius``.

    The oracle answer for gradient ``G`` is ``-radius * u1 v1^T``. Power
    iteration starts from a unit vector drawn from ``seed``, so the oracle is
    deterministic per input.
    """

    kind = "nuclear_ball"

    def __init__(self, rows: int, cols: int, radius: float, tol: float = 1e-8,
                 max_iter: int = 2000, seed: int = 0):
        if rows < 1 or cols < 1 or not radius > 0:
            raise ValueError("nuclear ball needs positive shape and radius")
        self.rows, self.cols = int(rows), int(cols)
        self.radius = float(radius)
        self.tol = float(tol)
        self.max_iter = int(max_iter)
        self.seed = int(seed)
        self.shape = (self.rows, self.cols)
        # ||X||_F <= ||X||_*, so 2*radius bounds the Frobenius diameter.
        self.diameter = 2.0 * self.radius

    def lo_factored(self, g) -> RankOne:
        if _is_zero(g):
            return RankOne(0.0, np.zeros(self.rows), np.zeros(self.cols))
        # near-ties between the top singular values slow the iteration down;
        # retry from fresh deterministic starts with a larger budget
        max_iter = self.max_iter
        for attempt in range(LO_ATTEMPTS):
            rng = make_rng(self.seed) if attempt == 0 else make_rng([self.seed, attempt])
            try:
                _, u, v = top_singular_pair(g, self.tol, max_iter, rng)
                return RankOne(-self.radius, u, v)
            except NumericalError:
                if attempt == LO_ATTEMPTS - 1:
                    raise
                max_iter *= 4

    def lo(self, g):
        return self.lo_factored(g).densify()

    def contains(self, p, tol=MEMBERSHIP_TOL):
        p = np.asarray(p, dtype=float)
        if max(p.shape) > NUCLEAR_MEMBERSHIP_MAX:
            raise NotImplementedError(
                f"nuclear-ball membership is limited to {NUCLEAR_MEMBERSHIP_MAX}x"
                f"{NUCLEAR_MEMBERSHIP_MAX} matrices")
        return bool(np.linalg.svd(p, compute_uv=False).sum() <= self.radius + tol)

    def sample(self, rng, terms: int = 3):
        w = rng.dirichlet(np.ones(terms)) * rng.uniform()
        out = np.zeros(self.shape)
        for wj in w:
            u = rng.standard_normal(self.rows)
            v = rng.standard_normal(self.cols)
            out += wj * self.radius * np.outer(u / np.linalg.norm(u), v / np.linalg.norm(v))
        return out

    def describe(self):
        return {"kind": self.kind, "rows": self.rows, "cols": self.cols,
                "radius": self.radius, "diameter": self.diameter,
                "tol": self.tol, "max_iter": self.max_iter, "seed": self.seed}


def _is_zero(G) -> bool:
    if sp.issparse(G):
        return G.count_nonzero() == 0
    return not np.any(G)


def _gram_start(G):
    """Right-vector guess from an eigensolve of the small Gram matrix.

    Any top eigenvector of ``G G^T`` (or ``G^T G``) gives a valid singular
    pair, so near-ties in the spectrum do not slow it down. The alternating
    loop that follows certifies the residual.
    """
    wide = G.shape[0] <= G.shape[1]
    K = G @ G.T if wide else G.T @ G
    K = np.asarray(K.todense() if sp.issparse(K) else K)
    _, vecs = np.linalg.eigh(K)
    top = vecs[:, -1]
    if wide:
        w = np.asarray(G.T @ top).ravel()
        return w / np.linalg.norm(w)
    return top


def top_singular_pair(G, tol: float = 1e-8, max_iter: int = 2000, rng=None):
    """Leading singular triple of a dense or sparse matrix.

    Alternates ``u <- G v``, ``v <- G^T u`` (power iteration on ``G^T G``)
    from a random start, or from a Gram-matrix eigenvector when the smaller
    side is at most 256, until ``||G v - sigma u|| <= tol * sigma``; ``G^T u = sigma v`` holds by
    construction. The sign is fixed so the first nonzero entry of ``u`` is
    nonnegative.

    Returns
    -------
    sigma : float
    u, v : ndarray
        Unit left and right singular vectors.

    Raises
    ------
    NumericalError
        If ``max_iter`` is reached; ``residual`` is the relative residual.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    if rng is None:
        rng = make_rng(0)
    if not sp.issparse(G):
        G = np.asarray(G, dtype=float)
        if G.ndim != 2:
            raise ValueError("expected a matrix")
        if not np.all(np.isfinite(G)):
            raise ValueError("matrix has non-finite entries")
    if _is_zero(G):
        raise ValueError("top_singular_pair needs a nonzero matrix")
    GT = G.T
    v = rng.standard_normal(G.shape[1])
    v /= np.linalg.norm(v)
    if min(G.shape) <= GRAM_MAX:
        v = _gram_start(G)
    Gv = np.asarray(G @ v).ravel()
    rel = math.inf
    for _ in range(max_iter):
        s = np.linalg.norm(Gv)
        if s == 0.0:
            # start vector in the null space; draw another
            v = rng.standard_normal(G.shape[1])
            v /= np.linalg.norm(v)
            Gv = np.asarray(G @ v).ravel()
            continue
        u = Gv / s
        w = np.asarray(GT @ u).ravel()
        sigma = np.linalg.norm(w)
        v = w / sigma
        Gv = np.asarray(G @ v).ravel()
        rel = np.linalg.norm(Gv - sigma * u) / sigma
        if rel <= tol:
            break
    else:
        raise NumericalError(
            f"power iteration did not converge in {max_iter} steps "
            f"(relative residual {rel:.3e})", residual=rel)
    nz = np.flatnonzero(u)
    if nz.size and u[nz[0]] < 0:
        u, v = -u, -v
    return float(sigma), u, v


def lo_solve(fset: FeasibleSet, g, counters: OracleCounters | None = None) -> np.ndarray:
    """Validated, counted call to ``fset.lo``."""
    if sp.issparse(g):
        if g.shape != fset.shape:
            raise ValueError(f"gradient shape {g.shape} does not match set shape {fset.shape}")
    else:
        g = np.asarray(g, dtype=float)
        if g.shape != fset.shape:
            raise ValueError(f"gradient shape {g.shape} does not match set shape {fset.shape}")
        if not np.all(np.isfinite(g)):
            raise ValueError("gradient has non-finite entries")
    out = fset.lo(g)
    if counters is not None:
        counters.add("lo")
    return out


def membership(fset: FeasibleSet, p, tol: float = MEMBERSHIP_TOL) -> bool:
    p = np.asarray(p, dtype=float)
    if p.shape != fset.shape:
        raise ValueError(f"point shape {p.shape} does not match set shape {fset.shape}")
    return fset.contains(p, tol)
