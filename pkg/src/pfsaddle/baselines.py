"""Saddle-point Frank-Wolfe, the comparison baseline."""

from __future__ import annotations

import time

import numpy as np

from .core import OracleCounters, TraceRecord
from .lo_oracles import lo_solve
from .metrics import fw_gap
from .mpcgs import SaddleSolution, emit


def spfw_step(f, x, y, k, counters=None):
    """One simultaneous FW step with ``gamma = 2/(k+2)``.

    ``u = lo(grad_x f)``, ``v = lo(-grad_y f)``; one FO and two LO calls.
    """
    gx, gy = f.grad(x, y)
    if counters is not None:
        counters.add("fo")
    u = lo_solve(f.set_x, gx, counters)
    v = lo_solve(f.set_y, -gy, counters)
    gamma = 2.0 / (k + 2)
    return (1.0 - gamma) * x + gamma * u, (1.0 - gamma) * y + gamma * v


def spfw_solve(f, x0, y0, iters=None, time_limit=None, counters=None, trace_sink=None,
               record_every=1):
    """Run SPFW for ``iters`` steps or until ``time_limit`` seconds of solver time.

    Records carry no theory bound. At least one of the limits is required.
    """
    if iters is None and time_limit is None:
        raise ValueError("give iters or time_limit")
    if counters is None:
        counters = OracleCounters()
    x = np.array(x0, dtype=float, copy=True)
    y = np.array(y0, dtype=float, copy=True)
    trace = []
    elapsed = 0.0
    k = 0
    while (iters is None or k < iters) and (time_limit is None or elapsed < time_limit):
        t0 = time.perf_counter()
        x, y = spfw_step(f, x, y, k, counters)
        k += 1
        elapsed += time.perf_counter() - t0
        if k % record_every == 0:
            emit(trace, trace_sink,
                 TraceRecord(k, 1e3 * elapsed, fw_gap(f, x, y), None, counters.snapshot()))
    return SaddleSolution(x, y, trace)
