"""Mirror-prox conditional gradient sliding for convex-strongly-concave saddles.

Each outer iteration runs a fixed-point ``prox_step``: the dual block is
maximized approximately by CGS and the primal block gets one CndG prox
update. Only LO calls touch the feasible sets.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .cgs import CgsSchedule, cgs_iterations_for, cgs_minimize, default_delta0
from .cndg import cndg
from .core import OracleCounters, TraceRecord
from .metrics import fw_gap


@dataclass(frozen=True)
class MpcgsSchedule:
    """Parameter schedule for ``N`` outer iterations.

    ``gamma_k = 3/(k+2)``, ``alpha_k = 6 kappa L/(k+1)``,
    ``zeta_k = L dX^2/(384 k(k+1))``, ``eps_k = kappa L dX^2/(k(k+1)(k+2))``.
    """

    L: float
    mu: float
    dX: float
    dY: float
    N: int
    warm_start: bool = False

    def __post_init__(self):
        if not (self.mu > 0 and self.L >= self.mu):
            raise ValueError("schedule needs L >= mu > 0")
        if self.N < 0:
            raise ValueError("N must be >= 0")

    @classmethod
    def from_constants(cls, c, N, **kw):
        return cls(L=c.L, mu=c.mu, dX=c.dX, dY=c.dY, N=N, **kw)

    @property
    def kappa(self):
        return self.L / self.mu

    @staticmethod
    def gamma(k):
        return 3.0 / (k + 2)

    def alpha(self, k):
        return 6.0 * self.kappa * self.L / (k + 1)

    def zeta(self, k):
        return self.L * self.dX**2 / (384.0 * k * (k + 1))

    def eps(self, k):
        return self.kappa * self.L * self.dX**2 / (k * (k + 1) * (k + 2))

    def bound(self, k):
        """Guaranteed primal-dual gap after ``k`` iterations."""
        return 11.0 * self.kappa * self.L * self.dX**2 / ((k + 1) * (k + 2))

    def prox(self, k) -> "ProxConfig":
        return ProxConfig.make(self.eps(k), self.kappa, self.L, self.gamma(k),
                               self.alpha(k), self.zeta(k), self.dX)

    def cgs(self, k) -> CgsSchedule:
        """Inner CGS schedule used at outer iteration ``k``."""
        delta0 = default_delta0(self.L, self.dY)
        n = cgs_iterations_for(self.prox(k).eps_cgs, self.L, self.mu, delta0)
        return CgsSchedule(self.L, self.mu, n, delta0)

    def fo_count(self, k) -> int:
        """Exact gradient evaluations charged by ``prox_step`` at iteration ``k``."""
        c = self.cgs(k)
        return self.prox(k).R * (c.N * c.M + 1)

    def table(self):
        """Per-iteration constants (for manifests and count checks)."""
        rows = []
        for k in range(1, self.N + 1):
            p, c = self.prox(k), self.cgs(k)
            rows.append({"k": k, "gamma": self.gamma(k), "alpha": self.alpha(k),
                         "zeta": self.zeta(k), "eps": self.eps(k), "eps_cgs": p.eps_cgs,
                         "eps_mp": p.eps_mp, "R": p.R, "cgs_N": c.N, "cgs_M": c.M,
                         "cgs_delta0": c.delta0, "bound": self.bound(k)})
        return rows


@dataclass(frozen=True)
class ProxConfig:
    eps_cgs: float
    eps_mp: float
    R: int

    @classmethod
    def make(cls, eps, kappa, L, gamma, alpha, zeta, dX):
        eps_cgs = eps / (64.0 * kappa)
        eps_mp = 4.0 * gamma * math.sqrt(2.0 * kappa * L * eps_cgs / alpha**2 + 2.0 * zeta / alpha)
        if not eps_mp > 0:
            raise ValueError("eps_mp must be positive")
        R = max(1, math.ceil(math.log2(4.0 * dX / eps_mp)))
        return cls(eps_cgs, eps_mp, R)


@dataclass
class SaddleSolution:
    """``x_final`` is the last primal iterate, ``y_bar`` the weighted dual average."""

    x_final: np.ndarray
    y_bar: np.ndarray
    trace: list = field(default_factory=list)


class DualAverage:
    """Running ``y_bar_k = sum_s s(s+1) y_s / sum_s s(s+1)``.

    The normalizer ``sum_{s<=k} s(s+1) = k(k+1)(k+2)/3`` gives the weights
    their closed form.
    """

    def __init__(self, y0):
        self.value = np.array(y0, dtype=float, copy=True)
        self.weight = 0.0

    def update(self, k, y):
        w = float(k * (k + 1))
        self.weight += w
        self.value = self.value + (w / self.weight) * (y - self.value)
        return self.value


def prox_step(f, x0, y0, z, v, gamma, alpha, zeta, eps, counters=None, on_iterate=None,
              warm_start=False):
    """Fixed-point iteration of the primal prox map.

    For ``r = 1..R``: ``y_r`` approximately maximizes ``f(x_{r-1}, .)`` by
    CGS started at ``y0`` (or at ``y_{r-1}`` with ``warm_start``), then
    ``v_r = CndG(grad_x f(z, y_r), v, alpha, zeta)`` and
    ``x_r = (1 - gamma) x0 + gamma v_r``.

    ``on_iterate(r, x_r, y_r, v_r)`` observes each round; ``r = 0`` reports
    the input ``x0``. Returns ``(x_R, y_R, v_R)``.
    """
    c = f.constants
    kappa, L = c.kappa, c.L
    cfg = ProxConfig.make(eps, kappa, L, gamma, alpha, zeta, c.dX)
    delta0 = default_delta0(L, c.dY)
    inner = CgsSchedule(L, c.mu, cgs_iterations_for(cfg.eps_cgs, L, c.mu, delta0), delta0)

    x = np.array(x0, dtype=float, copy=True)
    y = np.array(y0, dtype=float, copy=True)
    v_r = v
    if on_iterate is not None:
        on_iterate(0, x, y, v)
    for r in range(1, cfg.R + 1):
        x_prev = x
        start = y if warm_start else y0
        y = cgs_minimize(lambda w: -f.grad_y(x_prev, w), f.set_y, start, inner, counters)
        g = f.grad_x(z, y)
        if counters is not None:
            counters.add("fo")
        v_r = cndg(g, v, alpha, zeta, f.set_x, counters).q_plus
        x = (1.0 - gamma) * x0 + gamma * v_r
        if on_iterate is not None:
            on_iterate(r, x, y, v_r)
    return x, y, v_r


def emit(trace, trace_sink, record):
    trace.append(record)
    if trace_sink is not None:
        trace_sink(record)


def mpcgs_solve(f, x0, y0, schedule: MpcgsSchedule, counters=None, trace_sink=None,
                on_iterate=None, time_limit=None):
    """Run MPCGS for ``schedule.N`` iterations.

    After every iteration a :class:`TraceRecord` for ``(x_k, y_bar_k)`` is
    appended to the returned trace and passed to ``trace_sink``. Its FW-gap
    is evaluated with separate counters and outside the timed region.
    ``on_iterate(k, x_k, y_k, v_k, y_bar_k)`` is an optional observer.
    With ``time_limit`` (seconds of solver time) the run stops after the
    first iteration that reaches it.
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
        x, y, v = prox_step(f, x, y, z, v, gamma, schedule.alpha(k), schedule.zeta(k),
                            schedule.eps(k), counters, warm_start=schedule.warm_start)
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
