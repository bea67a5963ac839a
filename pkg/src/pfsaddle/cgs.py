"""Conditional gradient sliding for smooth strongly convex minimization."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .cndg import cndg


@dataclass(frozen=True)
class CgsSchedule:
    """Step constants for ``N`` outer epochs of CGS.

    ``delta0`` must upper-bound ``h(x0) - h*``; the usual choice is
    ``L D^2 / 2`` (see :func:`default_delta0`).
    """

    L: float
    mu: float
    N: int
    delta0: float

    def __post_init__(self):
        if not (self.mu > 0 and self.L >= self.mu):
            raise ValueError("CGS needs L >= mu > 0")
        if self.N < 0 or not self.delta0 > 0:
            raise ValueError("CGS needs N >= 0 and delta0 > 0")

    @property
    def M(self) -> int:
        return math.ceil(math.sqrt(24.0 * self.L / self.mu))

    @staticmethod
    def lam(k):
        return 2.0 / (k + 1)

    def beta(self, k):
        return 2.0 * self.L / k

    def eta(self, t, k):
        return 8.0 * self.L * self.delta0 * 2.0 ** (-t) / (self.mu * self.N * k)


def default_delta0(L, diameter):
    return 0.5 * L * diameter**2


def cgs_iterations_for(epsilon, L, mu, delta0):
    """Outer epochs needed for ``delta0 * 2^-N <= epsilon``."""
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    if epsilon >= delta0:
        return 0
    n = math.ceil(math.log2(delta0 / epsilon))
    # guard against log2 rounding just below an integer
    while delta0 * 2.0 ** (-n) > epsilon:
        n += 1
    return n


def cgs_minimize(grad, fset, x0, schedule: CgsSchedule, counters=None, callback=None):
    """Run CGS and return the last epoch's point ``x_bar_N``.

    Parameters
    ----------
    grad : callable
        ``grad(x)`` returns the gradient of the objective; every call counts
        as one FO call.
    fset : FeasibleSet
    x0 : ndarray
        Feasible start with ``h(x0) - h* <= schedule.delta0``.
    callback : callable, optional
        Called as ``callback(t, x_bar_t)`` after each epoch.
    """
    x_bar = np.array(x0, dtype=float, copy=True)
    M = schedule.M
    for t in range(1, schedule.N + 1):
        x = x_bar
        u = x_bar
        for k in range(1, M + 1):
            lam = schedule.lam(k)
            w = (1.0 - lam) * x + lam * u
            g = grad(w)
            if counters is not None:
                counters.add("fo")
            u = cndg(g, u, schedule.beta(k), schedule.eta(t, k), fset, counters).q_plus
            x = (1.0 - lam) * x + lam * u
        x_bar = x
        if callback is not None:
            callback(t, x_bar)
    return x_bar
