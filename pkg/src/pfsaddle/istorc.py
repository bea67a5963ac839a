"""Inexact STORC: variance-reduced stochastic conditional gradient sliding.

Objectives are accessed through batches. ``h.draw(rng, size)`` returns an
opaque batch and ``h.batch_grad(x, batch)`` the batch-averaged gradient at
``x``; evaluating one batch at two points gives the control variate
``grad_S(w) - grad_S(x0)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .cndg import cndg


class StochasticObjective:
    """Batch access to ``h(x) = E[H(x; xi)]``.

    ``n`` is the number of components for a finite sum (``None`` for an
    expectation); ``oracle`` names the counter charged per sample.
    """

    n: int | None = None
    oracle: str = "sfo"
    sigma: float = 0.0

    def draw(self, rng, size):
        raise NotImplementedError

    def batch_grad(self, x, batch):
        raise NotImplementedError

    def full_grad(self, x):
        raise NotImplementedError

    def value(self, x):
        raise NotImplementedError


class NoiseBatch(NamedTuple):
    size: int
    mean_noise: np.ndarray


class AdditiveNoiseObjective(StochasticObjective):
    """``H(x; xi) = h(x) + <xi, x>`` with ``xi ~ N(0, std^2 I)``.

    The batch mean of ``size`` noise draws is sampled directly from
    ``N(0, std^2 / size I)``, which has the same law as averaging the draws.
    """

    oracle = "sfo"

    def __init__(self, value, grad, dim, std):
        self._value = value
        self._grad = grad
        self.dim = int(dim)
        self.std = float(std)
        self.sigma = self.std * math.sqrt(self.dim)

    def draw(self, rng, size):
        size = int(size)
        if size < 1:
            raise ValueError("batch size must be >= 1")
        if self.std == 0.0:
            return NoiseBatch(size, np.zeros(self.dim))
        return NoiseBatch(size, rng.normal(0.0, self.std / math.sqrt(size), self.dim))

    def batch_grad(self, x, batch):
        return self._grad(x) + batch.mean_noise

    def full_grad(self, x):
        return self._grad(x)

    def value(self, x):
        return self._value(x)


class FiniteSumObjective(StochasticObjective):
    """``h(x) = (1/n) sum_i H_i(x)`` sampled uniformly with replacement.

    ``component_grads(x, idx)`` returns the stacked gradients of the listed
    components, shape ``(len(idx),) + x.shape``.
    """

    oracle = "ifo"

    def __init__(self, n, component_grads, value=None, sigma=0.0):
        self.n = int(n)
        self._component_grads = component_grads
        self._value = value
        self.sigma = float(sigma)

    def draw(self, rng, size):
        size = int(size)
        if size < 1:
            raise ValueError("batch size must be >= 1")
        return rng.integers(0, self.n, size=size)

    def batch_grad(self, x, batch):
        idx, counts = np.unique(batch, return_counts=True)
        G = self._component_grads(x, idx)
        return np.tensordot(counts / len(batch), G, axes=1)

    def full_grad(self, x):
        return self._component_grads(x, np.arange(self.n)).mean(axis=0)

    def value(self, x):
        return self._value(x)


@dataclass(frozen=True)
class IstorcSchedule:
    """Constants for ``N`` epochs of iSTORC on a set of diameter ``D``.

    ``scale`` multiplies the sample sizes ``S`` and ``Q_t`` (1 reproduces
    the theoretical values). ``n`` clamps ``Q_t`` for finite sums.
    """

    L: float
    mu: float
    D: float
    sigma: float
    N: int
    scale: float = 1.0
    n: int | None = None

    def __post_init__(self):
        if not (self.mu > 0 and self.L >= self.mu):
            raise ValueError("iSTORC needs L >= mu > 0")
        if not self.scale > 0:
            raise ValueError("scale must be positive")
        if self.N < 0 or not self.D > 0 or self.sigma < 0:
            raise ValueError("iSTORC needs N >= 0, D > 0, sigma >= 0")

    @property
    def kappa(self):
        return self.L / self.mu

    @property
    def M(self) -> int:
        return math.ceil(4.0 * math.sqrt(2.0 * self.kappa))

    @property
    def S(self) -> int:
        return max(1, math.ceil(self.scale * 4800.0 * self.M * self.kappa))

    def Q_raw(self, t) -> int:
        q = 1200.0 * 2.0 ** (t - 1) * self.sigma**2 * math.sqrt(self.kappa) / (self.L**2 * self.D**2)
        return max(1, math.ceil(self.scale * q))

    def Q(self, t) -> int:
        """Anchor batch size; equals ``n`` when the full gradient is used."""
        q = self.Q_raw(t)
        if self.n is not None and q >= self.n:
            return self.n
        return q

    def full_anchor(self, t) -> bool:
        return self.n is not None and self.Q_raw(t) >= self.n

    @staticmethod
    def lam(k):
        return 2.0 / (k + 1)

    def beta(self, k):
        return 3.0 * self.L / k

    def eta(self, t, k):
        return self.kappa * self.L * self.D**2 / (2.0 ** (t - 2) * self.M * k)

    def samples_total(self) -> int:
        """Stochastic gradients charged by one full run."""
        return sum(self.Q(t) + self.M * self.S for t in range(1, self.N + 1))


def istorc_iterations_for(epsilon, L, D):
    """Epochs needed for the guarantee ``L D^2 / 2^(N+1) <= epsilon``."""
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    n = max(0, math.ceil(math.log2(L * D**2 / epsilon)) - 1)
    while L * D**2 / 2.0 ** (n + 1) > epsilon:
        n += 1
    return n


def istorc_minimize(h: StochasticObjective, fset, x0, schedule: IstorcSchedule, rng,
                    counters=None, callback=None):
    """Run iSTORC and return ``x_bar_N``.

    Every epoch draws ``Q_t`` samples for the anchor gradient (or uses the
    full gradient when ``Q_t`` reaches ``n``), then each of the ``M`` inner
    steps draws ``S`` samples for the estimate
    ``r_k = grad_S(w_k) - grad_S(x0) + anchor``. Counters are charged by
    batch size under ``h.oracle``.
    """
    x_bar = np.array(x0, dtype=float, copy=True)
    M, S = schedule.M, schedule.S
    for t in range(1, schedule.N + 1):
        anchor = x_bar
        if schedule.full_anchor(t):
            nu = h.full_grad(anchor)
            drawn = h.n
        else:
            drawn = schedule.Q(t)
            nu = h.batch_grad(anchor, h.draw(rng, drawn))
        if counters is not None:
            counters.add(h.oracle, drawn)
        x = u = anchor
        for k in range(1, M + 1):
            lam = schedule.lam(k)
            w = (1.0 - lam) * x + lam * u
            batch = h.draw(rng, S)
            r = h.batch_grad(w, batch) - h.batch_grad(anchor, batch) + nu
            if counters is not None:
                counters.add(h.oracle, S)
            u = cndg(r, u, schedule.beta(k), schedule.eta(t, k), fset, counters).q_plus
            x = (1.0 - lam) * x + lam * u
        x_bar = x
        if callback is not None:
            callback(t, x_bar)
    return x_bar


class ProbeResult(NamedTuple):
    mean_error: np.ndarray
    second_moment: float
    std_error: np.ndarray


def estimator_variance_probe(h, point, anchor, anchor_grad, S, trials, rng, Q=None):
    """Monte-Carlo statistics of ``r - grad h(point)``.

    ``r = grad_S(point) - grad_S(anchor) + nu``. With ``Q`` given, ``nu`` is
    redrawn from ``Q`` fresh samples in every trial; otherwise the fixed
    ``anchor_grad`` is used (the exact gradient when ``None``).

    Returns the mean error vector, the mean squared error norm and the
    per-coordinate standard error of the mean.
    """
    if trials < 100:
        raise ValueError("need at least 100 trials")
    point = np.asarray(point, dtype=float)
    anchor = np.asarray(anchor, dtype=float)
    if Q is None and anchor_grad is None:
        anchor_grad = h.full_grad(anchor)
    true = h.full_grad(point)
    errs = np.empty((trials,) + true.shape)
    for i in range(trials):
        nu = anchor_grad if Q is None else h.batch_grad(anchor, h.draw(rng, Q))
        batch = h.draw(rng, S)
        errs[i] = h.batch_grad(point, batch) - h.batch_grad(anchor, batch) + nu - true
    flat = errs.reshape(trials, -1)
    mean = errs.mean(axis=0)
    second = float(np.mean(np.sum(flat**2, axis=1)))
    se = (flat.std(axis=0, ddof=1) / math.sqrt(trials)).reshape(true.shape)
    return ProbeResult(mean, second, se)
