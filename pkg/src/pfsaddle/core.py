"""Shared containers: oracle counters, problem constants, trace records, RNG."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

import numpy as np

#: Absolute tolerance used by every feasibility test.
MEMBERSHIP_TOL = 1e-9

#: Largest value an oracle counter may hold.
COUNT_MAX = 2**63 - 1

ORACLE_KINDS = ("fo", "sfo", "ifo", "lo")


class NumericalError(ArithmeticError):
    """An iterative routine failed to reach its tolerance.

    ``residual`` carries the last measured residual (or Wolfe gap) so callers
    can decide whether to retry.
    """

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class ConfigurationError(ValueError):
    """Invalid parameter combination or counter overflow."""


@dataclass
class OracleCounters:
    """Running counts of oracle calls made by one solver run.

    ``fo`` counts exact gradient evaluations, ``sfo``/``ifo`` count stochastic
    and finite-sum component gradients, ``lo`` counts linear minimizations.
    """

    fo: int = 0
    sfo: int = 0
    ifo: int = 0
    lo: int = 0

    def add(self, kind: str, n: int = 1) -> None:
        if kind not in ORACLE_KINDS:
            raise ValueError(f"unknown oracle kind {kind!r}")
        if n < 0:
            raise ValueError("oracle counts only increase")
        value = getattr(self, kind) + int(n)
        if value > COUNT_MAX:
            raise ConfigurationError(f"{kind} counter overflow ({value} > 2^63-1)")
        setattr(self, kind, value)

    def snapshot(self) -> "OracleCounters":
        return dataclasses.replace(self)

    def dominates(self, other: "OracleCounters") -> bool:
        return all(getattr(self, k) >= getattr(other, k) for k in ORACLE_KINDS)

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in ORACLE_KINDS}

    def __add__(self, other: "OracleCounters") -> "OracleCounters":
        return counters_merge(self, other)


def counters_merge(a: OracleCounters, b: OracleCounters) -> OracleCounters:
    """Componentwise sum of two counter sets."""
    out = {}
    for k in ORACLE_KINDS:
        v = getattr(a, k) + getattr(b, k)
        if v > COUNT_MAX:
            raise ConfigurationError(f"{k} counter overflow ({v} > 2^63-1)")
        out[k] = v
    return OracleCounters(**out)


@dataclass(frozen=True)
class ProblemConstants:
    """Smoothness ``L``, strong-concavity modulus ``mu``, gradient noise bound
    ``sigma`` and the diameters of the two feasible sets."""

    L: float
    mu: float
    sigma: float
    dX: float
    dY: float

    def __post_init__(self):
        if not (self.mu > 0 and self.L >= self.mu):
            raise ConfigurationError(f"need L >= mu > 0, got L={self.L}, mu={self.mu}")
        if not self.sigma >= 0:
            raise ConfigurationError(f"sigma must be >= 0, got {self.sigma}")
        if not (self.dX > 0 and self.dY > 0):
            raise ConfigurationError("diameters must be positive")
        for name in ("L", "mu", "sigma", "dX", "dY"):
            if not math.isfinite(getattr(self, name)):
                raise ConfigurationError(f"{name} must be finite")

    @property
    def kappa(self) -> float:
        return self.L / self.mu

    def as_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["kappa"] = self.kappa
        return d


@dataclass(frozen=True)
class TraceRecord:
    k: int
    wall_ms: float
    fw_gap: float
    theory_bound: float | None
    counters: OracleCounters


def make_rng(seed) -> np.random.Generator:
    """Counter-based generator (Philox) so streams can be split reproducibly.

    ``seed`` is an int or a sequence of ints naming a derived stream.
    """
    if isinstance(seed, (list, tuple)):
        return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(s) for s in seed])))
    return np.random.Generator(np.random.Philox(int(seed)))


def check_finite(a, name: str = "array") -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} has non-finite entries")
    return a
