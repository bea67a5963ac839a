"""Concrete convex-strongly-concave saddle problems.

``SaddleProblem`` is the evaluation contract the solvers use: exact partial
gradients, batch (stochastic) gradients, the two feasible sets and the
problem constants. Batches come from ``draw(rng, size)``; a finite-sum
problem returns index arrays sampled with replacement.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.special import logsumexp, softmax

from . import _projections
from .core import ProblemConstants, make_rng
from .istorc import AdditiveNoiseObjective, FiniteSumObjective, StochasticObjective
from .lo_oracles import L2Ball, NuclearBall, Simplex, top_singular_pair


class SaddleProblem:
    """Base class for ``min_x max_y f(x, y)``."""

    set_x = None
    set_y = None
    constants: ProblemConstants
    #: counter charged for batch gradients ("sfo" or "ifo")
    oracle = "sfo"
    #: component count of a finite sum, None for an expectation
    n = None
    #: True when f(., y) is affine, so min_x is a single LO call
    linear_in_x = False

    def value(self, x, y):
        raise NotImplementedError

    def grad_x(self, x, y):
        raise NotImplementedError

    def grad_y(self, x, y):
        raise NotImplementedError

    def grad(self, x, y):
        return self.grad_x(x, y), self.grad_y(x, y)

    def draw(self, rng, size):
        raise NotImplementedError

    def grad_x_batch(self, x, y, batch):
        raise NotImplementedError

    def grad_y_batch(self, x, y, batch):
        raise NotImplementedError

    def best_response_y(self, x):
        """Exact ``argmax_y f(x, y)`` when cheaply available, else None."""
        return None

    def y_objective(self, x) -> StochasticObjective:
        """``h(y) = -f(x, y)`` as a batch-accessible objective."""
        return _NegatedY(self, x)


class _NegatedY(StochasticObjective):
    def __init__(self, problem, x):
        self.problem = problem
        self.x = x
        self.n = problem.n
        self.oracle = problem.oracle
        self.sigma = problem.constants.sigma

    def draw(self, rng, size):
        return self.problem.draw(rng, size)

    def batch_grad(self, y, batch):
        return -self.problem.grad_y_batch(self.x, y, batch)

    def full_grad(self, y):
        return -self.problem.grad_y(self.x, y)

    def value(self, y):
        return -self.problem.value(self.x, y)


def spectral_norm(A):
    if not np.any(A):
        return 0.0
    return top_singular_pair(A, tol=1e-12, max_iter=100000)[0]


class SyntheticSaddle(SaddleProblem):
    """``f(x, y) = x^T A y + b^T x - (mu/2) ||y - c||^2``.

    ``x`` lives on the simplex and ``y`` on a centred Euclidean ball, so both
    oracles are exact and ``y*(x)`` is a clipped affine map. With
    ``noise_std > 0`` batch gradients add ``N(0, noise_std^2 I)`` noise to
    both partials (batch means are drawn directly), giving
    ``sigma = noise_std * sqrt(dx + dy)``.

    ``L = max(||A||_2, mu)`` bounds every block Lipschitz constant the
    solvers rely on.
    """

    linear_in_x = True
    oracle = "sfo"

    def __init__(self, A, b, c, mu, radius, noise_std=0.0, saddle=None):
        self.A = np.asarray(A, dtype=float)
        self.dx, self.dy = self.A.shape
        self.b = np.asarray(b, dtype=float)
        self.c = np.asarray(c, dtype=float)
        self.mu = float(mu)
        self.radius = float(radius)
        self.noise_std = float(noise_std)
        self.set_x = Simplex(self.dx)
        self.set_y = L2Ball(self.dy, self.radius)
        self.norm_A = spectral_norm(self.A)
        self.constants = ProblemConstants(
            L=max(self.norm_A, self.mu), mu=self.mu,
            sigma=self.noise_std * math.sqrt(self.dx + self.dy),
            dX=self.set_x.diameter, dY=self.set_y.diameter)
        self.saddle = saddle

    def value(self, x, y):
        d = y - self.c
        return float(x @ self.A @ y + self.b @ x - 0.5 * self.mu * (d @ d))

    def grad_x(self, x, y):
        return self.A @ y + self.b

    def grad_y(self, x, y):
        return self.A.T @ x - self.mu * (y - self.c)

    def draw(self, rng, size):
        size = int(size)
        if size < 1:
            raise ValueError("batch size must be >= 1")
        if self.noise_std == 0.0:
            return (size, np.zeros(self.dx), np.zeros(self.dy))
        s = self.noise_std / math.sqrt(size)
        return (size, rng.normal(0.0, s, self.dx), rng.normal(0.0, s, self.dy))

    def grad_x_batch(self, x, y, batch):
        return self.grad_x(x, y) + batch[1]

    def grad_y_batch(self, x, y, batch):
        return self.grad_y(x, y) + batch[2]

    def best_response_y(self, x):
        return _projections.project_l2_ball(self.c + self.A.T @ x / self.mu, self.radius)

    def y_objective(self, x):
        obj = AdditiveNoiseObjective(lambda y: -self.value(x, y),
                                     lambda y: -self.grad_y(x, y),
                                     self.dy, self.noise_std)
        obj.sigma = self.constants.sigma
        return obj

    def describe(self):
        return {"problem": "synthetic", "dx": self.dx, "dy": self.dy, "mu": self.mu,
                "norm_A": self.norm_A, "radius": self.radius, "noise_std": self.noise_std}


def synthetic_make(seed, dx, dy, target_kappa, mu=1.0, noise_std=0.0):
    """Random :class:`SyntheticSaddle` with a planted saddle point.

    ``A`` is Gaussian rescaled so ``||A||_2 = target_kappa * mu``. A point
    ``x*`` in the relative interior of the simplex and ``y*`` are drawn, then
    ``c`` and ``b`` are chosen so that ``(x*, y*)`` is a saddle point. The
    ball radius ``||c|| + target_kappa + 1`` keeps ``y*(x)`` interior for
    every ``x`` in the simplex.
    """
    if target_kappa < 1:
        raise ValueError("target_kappa must be >= 1")
    rng = make_rng(seed)
    A = rng.standard_normal((dx, dy))
    A *= target_kappa * mu / spectral_norm(A)
    x_star = rng.dirichlet(np.full(dx, 5.0))
    y_star = rng.standard_normal(dy)
    y_star *= 0.5 * rng.uniform() / np.linalg.norm(y_star)
    c = y_star - A.T @ x_star / mu
    b = -A @ y_star + rng.standard_normal()
    radius = float(np.linalg.norm(c) + target_kappa + 1.0)
    return SyntheticSaddle(A, b, c, mu, radius, noise_std=noise_std, saddle=(x_star, y_star))


@dataclass
class Dataset:
    """Sparse features ``(n, d)`` with dense class ids in ``[0, h)``.

    ``label_map`` sends the original label values to the dense ids.
    """

    features: sp.csr_matrix
    labels: np.ndarray
    label_map: dict = field(default_factory=dict)

    def __post_init__(self):
        self.features = sp.csr_matrix(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.shape[0] == 0:
            raise ValueError("dataset is empty")
        if self.labels.shape != (self.features.shape[0],):
            raise ValueError("one label per row is required")
        if not self.label_map:
            self.label_map = {int(v): int(v) for v in np.unique(self.labels)}
        h = len(self.label_map)
        if self.labels.min() < 0 or self.labels.max() >= h:
            raise ValueError("labels must lie in [0, h)")

    @property
    def n(self):
        return self.features.shape[0]

    @property
    def d(self):
        return self.features.shape[1]

    @property
    def h(self):
        return len(self.label_map)

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        a, b = self.features, other.features
        return (a.shape == b.shape and (a != b).nnz == 0
                and np.array_equal(self.labels, other.labels)
                and self.label_map == other.label_map)


class RobustMulticlass(SaddleProblem):
    """Distributionally robust multiclass logistic regression.

    ``f(X, y) = sum_i y_i l_i(X) - (lam/2) ||n y - 1||^2`` with
    ``l_i(X) = log(1 + sum_{j != b_i} exp(x_j.a_i - x_{b_i}.a_i))``,
    ``X`` in the nuclear ball of radius ``tau`` and ``y`` on the simplex.
    Component ``F_i`` keeps the regularizer and scales the ``i``-th loss
    term by ``n``.

    ``L`` and ``sigma`` are estimated with :func:`estimate_constants` unless
    given.
    """

    oracle = "ifo"

    def __init__(self, dataset: Dataset, tau, lam, L=None, sigma=None, seed=0,
                 trials=20, power_tol=1e-8):
        self.data = dataset
        self.A = dataset.features
        self.AT = self.A.T.tocsr()
        self.labels = dataset.labels
        self.n, self.d, self.h = dataset.n, dataset.d, dataset.h
        self.tau = float(tau)
        self.lam = float(lam)
        if not self.lam > 0:
            raise ValueError("lambda must be positive")
        self.mu = self.lam * self.n**2
        self.set_x = NuclearBall(self.h, self.d, self.tau, tol=power_tol, seed=seed)
        self.set_y = Simplex(self.n)
        self._rows = np.arange(self.n)
        self.constants = None
        if L is None or sigma is None:
            est = estimate_constants(self, trials, make_rng(seed))
            L = est.L if L is None else L
            sigma = est.sigma if sigma is None else sigma
        self.constants = ProblemConstants(L=float(L), mu=self.mu, sigma=float(sigma),
                                          dX=self.set_x.diameter, dY=self.set_y.diameter)

    def _margins(self, X, idx=None):
        A = self.A if idx is None else self.A[idx]
        rows = self._rows if idx is None else np.arange(len(idx))
        b = self.labels if idx is None else self.labels[idx]
        S = np.asarray(A @ X.T)
        return S - S[rows, b][:, None], rows, b

    def losses(self, X, idx=None):
        m, _, _ = self._margins(X, idx)
        return logsumexp(m, axis=1)

    def _loss_grad_weights(self, X, idx=None):
        m, rows, b = self._margins(X, idx)
        P = softmax(m, axis=1)
        P[rows, b] -= 1.0
        return logsumexp(m, axis=1), P

    def value(self, X, y):
        r = self.n * y - 1.0
        return float(y @ self.losses(X) - 0.5 * self.lam * (r @ r))

    def grad_x(self, X, y):
        _, P = self._loss_grad_weights(X)
        return np.asarray(self.AT @ (P * y[:, None])).T

    def grad_y(self, X, y):
        return self.losses(X) - self.lam * self.n * (self.n * y - 1.0)

    def grad(self, X, y):
        ell, P = self._loss_grad_weights(X)
        gx = np.asarray(self.AT @ (P * y[:, None])).T
        return gx, ell - self.lam * self.n * (self.n * y - 1.0)

    def _check_batch(self, batch):
        batch = np.asarray(batch)
        if batch.size == 0:
            raise ValueError("empty index batch")
        if batch.min() < 0 or batch.max() >= self.n:
            raise ValueError("batch index out of range")
        return batch

    def draw(self, rng, size):
        size = int(size)
        if size < 1:
            raise ValueError("batch size must be >= 1")
        return rng.integers(0, self.n, size=size)

    def grad_x_batch(self, X, y, batch):
        batch = self._check_batch(batch)
        idx, counts = np.unique(batch, return_counts=True)
        _, P = self._loss_grad_weights(X, idx)
        w = self.n * counts / batch.size * y[idx]
        return np.asarray(self.AT[:, idx] @ (P * w[:, None])).T

    def grad_y_batch(self, X, y, batch):
        batch = self._check_batch(batch)
        idx, counts = np.unique(batch, return_counts=True)
        g = -self.lam * self.n * (self.n * y - 1.0)
        g[idx] += self.n * counts / batch.size * self.losses(X, idx)
        return g

    def best_response_y(self, X):
        return _projections.project_simplex(1.0 / self.n + self.losses(X) / (self.lam * self.n**2))

    def y_objective(self, X):
        return _RobustY(self, self.losses(X))

    def describe(self):
        return {"problem": "robust_mc", "n": self.n, "d": self.d, "h": self.h,
                "tau": self.tau, "lambda": self.lam, "mu": self.mu}


class _RobustY(FiniteSumObjective):
    """``-f(X, .)`` for a fixed ``X``; losses are computed once."""

    def __init__(self, problem: RobustMulticlass, losses):
        self.p = problem
        self.ell = losses
        self.n = problem.n
        self.sigma = problem.constants.sigma

    def _reg_grad(self, y):
        return self.p.lam * self.n * (self.n * y - 1.0)

    def batch_grad(self, y, batch):
        w = np.bincount(batch, minlength=self.n) * (self.n / len(batch))
        return self._reg_grad(y) - w * self.ell

    def full_grad(self, y):
        return self._reg_grad(y) - self.ell

    def value(self, y):
        r = self.n * y - 1.0
        return float(-(y @ self.ell) + 0.5 * self.p.lam * (r @ r))


class QuadraticFiniteSum(FiniteSumObjective):
    """``h(x) = (1/n) sum_i (x^T P_i x / 2 + q_i^T x)`` on a set of radius ``R``.

    ``L`` is the average-smoothness constant ``sqrt(lambda_max(mean P_i^2))``,
    ``mu`` the smallest eigenvalue of ``mean P_i`` and ``sigma`` a bound on the
    gradient noise over ``||x|| <= R``.
    """

    def __init__(self, P, q, radius):
        self.P = np.asarray(P, dtype=float)
        self.q = np.asarray(q, dtype=float)
        n = self.P.shape[0]
        self.Pbar = self.P.mean(axis=0)
        self.qbar = self.q.mean(axis=0)
        self.mu = float(np.linalg.eigvalsh(self.Pbar)[0])
        self.L = float(math.sqrt(np.linalg.eigvalsh(np.einsum("nij,njk->ik", self.P, self.P) / n)[-1]))
        dP = self.P - self.Pbar
        sP = math.sqrt(np.linalg.eigvalsh(np.einsum("nij,njk->ik", dP, dP) / n)[-1])
        sq = math.sqrt(np.mean(np.sum((self.q - self.qbar) ** 2, axis=1)))
        super().__init__(n, self._grads, value=self._value, sigma=sP * radius + sq)

    def _grads(self, x, idx):
        return np.einsum("nij,j->ni", self.P[idx], x) + self.q[idx]

    def _value(self, x):
        return float(0.5 * x @ self.Pbar @ x + self.qbar @ x)


def quadratic_finite_sum(seed, n, dim, kappa, radius=1.0, spread=0.3):
    """Random :class:`QuadraticFiniteSum` whose mean Hessian has condition ``kappa``."""
    rng = make_rng(seed)
    Q, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
    eig = np.linspace(1.0, kappa, dim)
    H = (Q * eig) @ Q.T
    E = rng.standard_normal((n, dim, dim)) * spread
    E = 0.5 * (E + E.transpose(0, 2, 1))
    E -= E.mean(axis=0)
    q = rng.standard_normal((n, dim))
    return QuadraticFiniteSum(H + E, q, radius)


def _joint_grad(p, x, y):
    gx, gy = p.grad(x, y)
    return np.concatenate([np.ravel(gx), gy])


def estimate_constants(p: SaddleProblem, trials, rng, local_step=1e-4, power_steps=8,
                       pilot=256):
    """Fill in ``ProblemConstants`` for problems without analytic ones.

    ``L`` is 1.5 times the largest gradient-difference ratio
    ``||grad f(p1) - grad f(p2)|| / ||p1 - p2||`` over the sampled pairs,
    floored at ``mu``. Pairs are random far pairs plus local pairs whose
    offset is refined by a few power steps (finite-difference Hessian
    products), with base points pulled toward the centre of ``X`` where the
    curvature tends to peak. ``sigma`` is the largest root-mean-square
    deviation of component gradients from the full gradient over a pilot
    sample. Analytic problems return their constants unchanged.
    """
    if trials < 10:
        raise ValueError("need at least 10 trials")
    if isinstance(p, SyntheticSaddle):
        return p.constants
    mu = p.mu
    nx = int(np.prod(p.set_x.shape))
    ratio = 0.0
    sig2 = 0.0

    def split(z):
        return z[:nx].reshape(p.set_x.shape), z[nx:]

    for _ in range(trials):
        x1 = p.set_x.sample(rng) * rng.uniform()
        y1 = p.set_y.sample(rng)
        x2, y2 = p.set_x.sample(rng), p.set_y.sample(rng)
        z1 = np.concatenate([np.ravel(x1), y1])
        g1 = _joint_grad(p, x1, y1)
        far = np.concatenate([np.ravel(x2), y2]) - z1
        ratio = max(ratio, np.linalg.norm(_joint_grad(p, x2, y2) - g1) / np.linalg.norm(far))
        d = rng.standard_normal(z1.size)
        for _ in range(power_steps):
            d /= np.linalg.norm(d)
            diff = _joint_grad(p, *split(z1 + local_step * d)) - g1
            ratio = max(ratio, np.linalg.norm(diff) / local_step)
            d = diff
        if p.n is not None:
            idx = np.arange(p.n) if p.n <= pilot else rng.choice(p.n, pilot, replace=False)
            gx1, gy1 = split(g1)
            dev = 0.0
            for i in idx:
                one = np.array([i])
                dev += np.sum((p.grad_x_batch(x1, y1, one) - gx1) ** 2)
                dev += np.sum((p.grad_y_batch(x1, y1, one) - gy1) ** 2)
            sig2 = max(sig2, dev / len(idx))
    L = max(1.5 * ratio, mu)
    return ProblemConstants(L=L, mu=mu, sigma=math.sqrt(sig2),
                            dX=p.set_x.diameter, dY=p.set_y.diameter)
