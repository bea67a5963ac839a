"""Experiment runner.

``pfsaddle run <config>`` builds a problem, runs a solver and writes a trace
plus ``<out>.manifest.json``; ``pfsaddle bound-table <trace>`` compares a
trace's FW-gaps with its recorded theory bounds.

The config is flat ``key=value`` text (whitespace or newline separated,
``#`` starts a comment).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from .baselines import spfw_solve
from .core import ConfigurationError, NumericalError, OracleCounters, make_rng
from .data_io import LibsvmParseError, TraceParseError, parse_libsvm, read_trace, write_trace
from .mpcgs import MpcgsSchedule, mpcgs_solve
from .mpscgs import MpscgsSchedule, mpscgs_solve
from .problems import RobustMulticlass, synthetic_make

log = logging.getLogger("pfsaddle")

SOLVERS = ("mpcgs", "mpscgs", "spfw")
PROBLEMS = ("synthetic", "robust_mc")

# key -> (parser, default)
KEYS = {
    "solver": (str, None),
    "problem": (str, "synthetic"),
    "data": (str, None),
    "tau": (float, 100.0),
    "lambda": (str, "auto"),
    "iters": (int, 30),
    "seed": (int, 0),
    "scale": (float, 1.0),
    "out": (str, "trace.csv"),
    "warm_start": (str, "false"),
    "dx": (int, 20),
    "dy": (int, 10),
    "kappa": (float, 10.0),
    "mu": (float, 1.0),
    "noise_std": (float, 0.0),
    "n_features": (int, None),
    "L": (float, None),
    "sigma": (float, None),
    "time_limit": (float, None),
}

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_INFEASIBLE = 4
EXIT_NUMERIC = 5
EXIT_TRACE = 6


class DataError(Exception):
    pass


class InfeasibleError(Exception):
    pass


def parse_config(text):
    """Parse ``key=value`` tokens into a dict of typed values with defaults."""
    raw = {}
    for line in text.splitlines():
        for tok in line.split("#", 1)[0].split():
            key, sep, value = tok.partition("=")
            if not sep or not key:
                raise ConfigurationError(f"expected key=value, got {tok!r}")
            if key not in KEYS:
                raise ConfigurationError(f"invalid config key {key!r}; valid keys: {', '.join(KEYS)}")
            if key in raw:
                raise ConfigurationError(f"config key {key!r} given twice")
            raw[key] = value
    cfg = {}
    for key, (kind, default) in KEYS.items():
        if key in raw:
            try:
                cfg[key] = kind(raw[key])
            except ValueError:
                raise ConfigurationError(f"bad value for {key}: {raw[key]!r}") from None
        else:
            cfg[key] = default
    if cfg["solver"] is None:
        raise ConfigurationError(f"config needs solver=<name>; valid solvers: {', '.join(SOLVERS)}")
    if cfg["solver"] not in SOLVERS:
        raise ConfigurationError(
            f"unknown solver {cfg['solver']!r}; valid solvers: {', '.join(SOLVERS)}")
    if cfg["problem"] not in PROBLEMS:
        raise ConfigurationError(
            f"unknown problem {cfg['problem']!r}; valid problems: {', '.join(PROBLEMS)}")
    if cfg["warm_start"].lower() not in ("true", "false", "1", "0"):
        raise ConfigurationError("warm_start must be true or false")
    cfg["warm_start"] = cfg["warm_start"].lower() in ("true", "1")
    if cfg["iters"] < 0:
        raise ConfigurationError("iters must be >= 0")
    return cfg


def build_problem(cfg):
    """Return ``(problem, manifest extras)``."""
    if cfg["problem"] == "synthetic":
        if cfg["kappa"] < 1:
            raise InfeasibleError(f"kappa must be >= 1 (got {cfg['kappa']}), since L >= mu")
        if cfg["dx"] < 1 or cfg["dy"] < 1 or not cfg["mu"] > 0:
            raise InfeasibleError("synthetic problem needs dx, dy >= 1 and mu > 0")
        f = synthetic_make(cfg["seed"], cfg["dx"], cfg["dy"], cfg["kappa"], mu=cfg["mu"],
                           noise_std=cfg["noise_std"])
        return f, {"constants_source": "analytic"}
    path = cfg["data"]
    if path is None:
        raise DataError("problem=robust_mc needs data=<libsvm file>")
    if not os.path.isfile(path):
        raise DataError(f"dataset file not found: {path}")
    with open(path) as fh:
        try:
            ds = parse_libsvm(fh, d=cfg["n_features"])
        except LibsvmParseError as exc:
            raise DataError(f"{path}: {exc}") from None
    lam = 1.0 / ds.n if cfg["lambda"] == "auto" else float(cfg["lambda"])
    if not lam > 0 or not cfg["tau"] > 0:
        raise InfeasibleError("lambda and tau must be positive")
    if cfg["L"] is not None and cfg["L"] < lam * ds.n**2:
        raise InfeasibleError(f"L={cfg['L']} is below mu=lambda*n^2={lam * ds.n**2}, so kappa < 1")
    f = RobustMulticlass(ds, cfg["tau"], lam, L=cfg["L"], sigma=cfg["sigma"], seed=cfg["seed"])
    source = "config" if cfg["L"] is not None and cfg["sigma"] is not None else "estimated"
    extras = {"constants_source": source, "lambda": lam,
              "label_map": {str(k): v for k, v in ds.label_map.items()},
              "dataset": {"path": path, "n": ds.n, "d": ds.d, "h": ds.h}}
    return f, extras


def run(config_path, verbose=False):
    """Execute one config; returns a process exit code."""
    try:
        with open(config_path) as fh:
            cfg = parse_config(fh.read())
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        f, extras = build_problem(cfg)
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (InfeasibleError, ConfigurationError) as exc:
        print(f"error: infeasible parameters: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except NumericalError as exc:
        print(f"error: numerical failure while building the problem: {exc}", file=sys.stderr)
        return EXIT_NUMERIC

    out = cfg["out"]
    fmt = "json" if out.endswith(".json") else "csv"
    deviations = []
    if cfg["scale"] != 1.0 and cfg["solver"] == "mpscgs":
        deviations.append(f"sample sizes scaled by {cfg['scale']}")
    if cfg["warm_start"] and cfg["solver"] == "mpcgs":
        deviations.append("inner CGS warm-started from the previous dual iterate")
    x0, y0 = f.set_x.canonical_point(), f.set_y.canonical_point()
    counters = OracleCounters()

    def sink(rec):
        log.info("k=%d fw_gap=%.6g bound=%s wall_ms=%.1f", rec.k, rec.fw_gap,
                 "-" if rec.theory_bound is None else f"{rec.theory_bound:.6g}", rec.wall_ms)

    solver = cfg["solver"]
    schedule = None
    try:
        if solver == "mpcgs":
            schedule = MpcgsSchedule.from_constants(f.constants, cfg["iters"],
                                                    warm_start=cfg["warm_start"])
            sol = mpcgs_solve(f, x0, y0, schedule, counters, sink, time_limit=cfg["time_limit"])
        elif solver == "mpscgs":
            schedule = MpscgsSchedule.from_problem(f, cfg["iters"], scale=cfg["scale"])
            sol = mpscgs_solve(f, x0, y0, schedule, make_rng([cfg["seed"], 1]), counters, sink,
                               time_limit=cfg["time_limit"])
        else:
            sol = spfw_solve(f, x0, y0, iters=cfg["iters"], time_limit=cfg["time_limit"],
                             counters=counters, trace_sink=sink)
    except NumericalError as exc:
        print(f"error: solver numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC

    with open(out, "w") as fh:
        write_trace(sol.trace, fmt, fh)
    manifest = {
        "config": cfg,
        "problem": f.describe(),
        "constants": f.constants.as_dict(),
        "seed": cfg["seed"],
        "solver_stream": [cfg["seed"], 1] if solver == "mpscgs" else None,
        "scale": cfg["scale"],
        "start": "canonical points of X and Y",
        "deviations": deviations,
        "schedule": None if schedule is None else schedule.table()[:len(sol.trace)],
        "counters": counters.as_dict(),
        "iterations_run": len(sol.trace),
        **extras,
    }
    with open(out + ".manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=1, default=_json_default)
        fh.write("\n")
    last = sol.trace[-1].fw_gap if sol.trace else float("nan")
    print(f"{solver}: {len(sol.trace)} iterations, final fw_gap {last:.6g}, trace {out}")
    return EXIT_OK


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def bound_table(trace_path, stream=None):
    """Print per-k FW-gap against the recorded bound; returns an exit code.

    The FW-gap upper-bounds the primal-dual gap, so a passing row is a
    conservative check of the bound.
    """
    stream = sys.stdout if stream is None else stream
    try:
        with open(trace_path) as fh:
            records = read_trace(fh)
    except OSError as exc:
        print(f"error: cannot read trace: {exc}", file=sys.stderr)
        return EXIT_TRACE
    except TraceParseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_TRACE
    bounded = [r for r in records if r.theory_bound is not None]
    if not bounded:
        print("no bound recorded", file=stream)
        return EXIT_OK
    print(f"{'k':>6} {'fw_gap':>14} {'bound':>14}  ok", file=stream)
    failing = []
    for r in bounded:
        ok = r.fw_gap <= r.theory_bound
        if not ok:
            failing.append(r.k)
        print(f"{r.k:>6} {r.fw_gap:>14.6g} {r.theory_bound:>14.6g}  {'yes' if ok else 'NO'}",
              file=stream)
    passed = len(bounded) - len(failing)
    if failing:
        print(f"FAIL {passed}/{len(bounded)}; failing k: {', '.join(map(str, failing))}", file=stream)
        return 1
    print(f"PASS {passed}/{len(bounded)}", file=stream)
    return EXIT_OK


def main(argv=None):
    parser = argparse.ArgumentParser(prog="pfsaddle", description=__doc__.splitlines()[0])
    parser.add_argument("--verbose", action="store_true", help="log every iteration")
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run a solver from a key=value config")
    p_run.add_argument("config")
    p_bt = sub.add_parser("bound-table", help="compare a trace with its theory bounds")
    p_bt.add_argument("trace")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(message)s")
    if args.command == "run":
        return run(args.config, args.verbose)
    return bound_table(args.trace)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
