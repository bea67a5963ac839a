"""Stochastic mirror-prox conditional gradient sliding.

The batch solver's prox step with two substitutions: the dual block is
maximized by iSTORC, and the primal prox update uses a gradient averaged
over a sample set ``P_k`` drawn once per outer iteration.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from .cndg import cndg
from .core import OracleCounters, TraceRecord
from .istorc import IstorcSchedule, istorc_iterations_for, istorc_minimize
from .metrics import fw_gap
from .mpcgs import DualAverage, SaddleSolution, emit


@dataclass(frozen=True)
class MpscgsSchedule:
    """Parameter schedule for ``N`` outer iterations of the stochastic solver.

    ``gamma_k`` and ``alpha_k`` match :class:`~pfsaddle.mpcgs.MpcgsSchedule`;
    ``zeta_k = L dX^2/(576 k(k+1))`` and
    ``P_k = ceil(96 sigma^2 (k+1)^3/(kappa L^2 dX^2))``. ``scale`` multiplies
    ``P_k`` and the iSTORC sample sizes (1 keeps the theoretical values);
    ``n`` marks a finite sum of ``n`` components.
    """

    L: float
    mu: float
    dX: float
    dY: float
    sigma: float
    N: int
    scale: float = 1.0
    n: int | None = None

    def __post_init__(self):
        if not (self.mu > 0 and self.L >= self.mu):
            raise ValueError("schedule needs L >= mu > 0")
        if self.N < 0 or self.sigma < 0:
            raise ValueError("schedule needs N >= 0 and sigma >= 0")
        if not self.scale > 0:
            raise ValueError("scale must be positive")

    @classmethod
    def from_problem(cls, f, N, scale=1.0):
        c = f.constants
        return cls(L=c.L, mu=c.mu, dX=c.dX, dY=c.dY, sigma=c.sigma, N=N, scale=scale, n=f.n)

    @property
    def kappa(self):
        return self.L / self.mu

    @staticmethod
    def gamma(k):
        return 3.0 / (k + 2)

    def alpha(self, k):
        return 6.0 * self.kappa * self.L / (k + 1)

    def zeta(self, k):
        return self.L * self.dX**2 / (576.0 * k * (k + 1))

    def eps(self, k):
        return self.kappa * self.L * self.dX**2 / (k * (k + 1) * (k + 2))

    def P(self, k) -> int:
        raw = 96.0 * self.sigma**2 * (k + 1) ** 3 / (self.kappa * self.L**2 * self.dX**2)
        return max(1, math.ceil(self.scale * raw))

    def bound(self, k):
        """Guaranteed expected primal-dual gap after ``k`` iterations."""
        return 12.0 * self.kappa * self.L * self.dX**2 / ((k + 1) * (k + 2))

    def prox(self, k) -> "StochasticProxConfig":
        return StochasticProxConfig.make(self.eps(k), self.kappa, self.L, self.gamma(k),
                                         self.alpha(k), self.zeta(k), self.P(k),
                                         self.sigma, self.dX)

    def istorc(self, k) -> IstorcSchedule:
        """Inner iSTORC schedule used at outer iteration ``k``."""
        n_epochs = istorc_iterations_for(self.prox(k).eps_cgs, self.L, self.dY)
        return IstorcSchedule(self.L, self.mu, self.dY, self.sigma, n_epochs, self.scale, self.n)

    def sample_count(self, k) -> int:
        """Stochastic gradients charged at iteration ``k``."""
        return self.prox(k).R * (self.P(k) + self.istorc(k).samples_total())

    def table(self):
        rows = []
        for k in range(1, self.N + 1):
            p, s = self.prox(k), self.istorc(k)
            rows.append({"k": k, "gamma": self.gamma(k), "alpha": self.alpha(k),
                         "zeta": self.zeta(k), "eps": self.eps(k), "P": self.P(k),
                         "eps_cgs": p.eps_cgs, "eps_mp": p.eps_mp, "R": p.R,
                         "istorc_N": s.N, "istorc_M": s.M, "istorc_S": s.S,
                         "istorc_Q": [s.Q(t) for t in range(1, s.N + 1)],
                         "bound": self.bound(k)})
        return rows


@dataclass(frozen=True)
class StochasticProxConfig:
    eps_cgs: float
    eps_mp: float
    R: int

    @classmethod
    def make(cls, eps, kappa, L, gamma, alpha, zeta, batch_size, sigma, dX):
        eps_cgs = eps / (64.0 * kappa)
        eps_mp = 8.0 * gamma**2 * (4.0 * kappa * L * eps_cgs / alpha**2 + 2.0 * zeta / alpha
                                   + 2.0 * sigma**2 / (batch_size * alpha**2))
        if not eps_mp > 0:
            raise ValueError("eps_mp must be positive")
        R = max(1, math.ceil(math.log2(4.0 * dX**2 / eps_mp)))
        return cls(eps_cgs, eps_mp, R)


def stochastic_prox_step(f, x0, y0, z, v, gamma, alpha, zeta, batch, batch_size, eps, rng,
                         counters=None, scale=1.0, on_iterate=None):
    """Stochastic fixed-point iteration of the primal prox map.

    ``batch`` (of ``batch_size`` samples, from ``f.draw``) is reused for every
    round: ``v_r = CndG(grad_x f_P(z, y_r), v, alpha, zeta)``, charging
    ``batch_size`` stochastic gradients per round. ``y_r`` comes from iSTORC
    on ``-f(x_{r-1}, .)`` started at ``y0`` with its own fresh samples.
    Returns ``(x_R, y_R, v_R)``.
    """
    c = f.constants
    kappa, L = c.kappa, c.L
    cfg = StochasticProxConfig.make(eps, kappa, L, gamma, alpha, zeta, batch_size, c.sigma, c.dX)
    inner = IstorcSchedule(L, c.mu, c.dY, c.sigma, istorc_iterations_for(cfg.eps_cgs, L, c.dY),
                           scale, f.n)
    x = np.array(x0, dtype=float, copy=True)
    y = np.array(y0, dtype=float, copy=True)
    v_r = v
    if on_iterate is not None:
        on_iterate(0, x, y, v)
    for r in range(1, cfg.R + 1):
        y = istorc_minimize(f.y_objective(x), f.set_y, y0, inner, rng, counters)
        g = f.grad_x_batch(z, y, batch)
        if counters is not None:
            counters.add(f.oracle, batch_size)
        v_r = cndg(g, v, alpha, zeta, f.set_x, counters).q_plus
        x = (1.0 - gamma) * x0 + gamma * v_r
        if on_iterate is not None:
            on_iterate(r, x, y, v_r)
    return x, y, v_r


def mpscgs_solve(f, x0, y0, schedule: MpscgsSchedule, rng, counters=None, trace_sink=None,
                 on_iterate=None, time_limit=None):
    """Run the stochastic solver for ``schedule.N`` iterations.

    Trace records and observers follow :func:`~pfsaddle.mpcgs.mpcgs_solve`;
    the FW-gap in each record uses exact gradients.
    """
    if counters is None:
        counters = OracleCounters()
    x = np.array(x0, dtype=float, copy=True)
    v = x.copy()
    y = np.array(y0, dtype=float, copy=True)
    avg = DualAverage(y)
    trace = []
    elapsed = 0.0
    for k in range(1, schedule.N + 1):
        t0 = time.perf_counter()
        gamma = schedule.gamma(k)
        z = (1.0 - gamma) * x + gamma * v
        size = schedule.P(k)
        batch = f.draw(rng, size)
        x, y, v = stochastic_prox_step(f, x, y, z, v, gamma, schedule.alpha(k), schedule.zeta(k),
                                       batch, size, schedule.eps(k), rng, counters,
                                       scale=schedule.scale)
        y_bar = avg.update(k, y)
        elapsed += time.perf_counter() - t0
        gap = fw_gap(f, x, y_bar)
        emit(trace, trace_sink, TraceRecord(k, 1e3 * elapsed, gap, schedule.bound(k),
                                            counters.snapshot()))
        if on_iterate is not None:
            on_iterate(k, x, y, v, y_bar)
        if time_limit is not None and elapsed >= time_limit:
            break
    return SaddleSolution(x, avg.value, trace)
