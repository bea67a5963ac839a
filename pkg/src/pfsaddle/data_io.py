"""LIBSVM-format datasets and trace files."""

from __future__ import annotations

import csv
import io
import json
import math

import numpy as np
import scipy.sparse as sp

from .core import ORACLE_KINDS, OracleCounters, TraceRecord
from .problems import Dataset

TRACE_COLUMNS = ("k", "wall_ms", "fw_gap", "theory_bound") + ORACLE_KINDS


class LibsvmParseError(ValueError):
    """Malformed LIBSVM input; ``line`` is the 1-based line number."""

    def __init__(self, message, line):
        super().__init__(f"line {line}: {message}")
        self.line = line


def _parse_float(tok, lineno, what):
    try:
        v = float(tok)
    except ValueError:
        raise LibsvmParseError(f"bad {what} {tok!r}", lineno) from None
    if not math.isfinite(v):
        raise LibsvmParseError(f"non-finite {what} {tok!r}", lineno)
    return v


def _label_key(tok, lineno):
    """Labels are compared numerically; integral values are kept as int."""
    v = _parse_float(tok, lineno, "label")
    return int(v) if v.is_integer() else v


def parse_libsvm(stream, d=None) -> Dataset:
    """Read ``<label> <idx>:<val> ...`` lines into a :class:`Dataset`.

    Text after ``#`` is ignored, as are blank lines. Indices are 1-based in
    the file and must increase strictly within a row. Labels are remapped to
    ``0..h-1`` in sorted numeric order; the mapping is kept on the dataset.
    ``d`` forces the feature count (default: largest index seen).

    Raises
    ------
    LibsvmParseError
        Malformed token, non-increasing or out-of-range index, NaN/Inf value.
    ValueError
        No data rows.
    """
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    labels, indptr, indices, values = [], [0], [], []
    max_idx = 0
    for lineno, raw in enumerate(stream, start=1):
        line = raw.split("#", 1)[0].split()
        if not line:
            continue
        labels.append(_label_key(line[0], lineno))
        prev = 0
        for tok in line[1:]:
            idx_s, sep, val_s = tok.partition(":")
            if not sep:
                raise LibsvmParseError(f"expected idx:value, got {tok!r}", lineno)
            try:
                idx = int(idx_s)
            except ValueError:
                raise LibsvmParseError(f"bad index {idx_s!r}", lineno) from None
            if idx < 1:
                raise LibsvmParseError(f"index {idx} is not 1-based", lineno)
            if idx <= prev:
                raise LibsvmParseError(f"index {idx} does not increase", lineno)
            if d is not None and idx > d:
                raise LibsvmParseError(f"index {idx} exceeds d={d}", lineno)
            prev = idx
            indices.append(idx - 1)
            values.append(_parse_float(val_s, lineno, "value"))
        max_idx = max(max_idx, prev)
        indptr.append(len(indices))
    if not labels:
        raise ValueError("LIBSVM input has no data rows")
    classes = sorted(set(labels))
    label_map = {c: i for i, c in enumerate(classes)}
    n = len(labels)
    X = sp.csr_matrix((np.array(values, dtype=float), np.array(indices, dtype=np.int64),
                       np.array(indptr, dtype=np.int64)),
                      shape=(n, max_idx if d is None else int(d)))
    y = np.array([label_map[b] for b in labels], dtype=np.int64)
    return Dataset(X, y, label_map)


def _fmt(v):
    return repr(int(v)) if float(v).is_integer() and abs(v) < 2**53 else repr(float(v))


def write_libsvm(dataset: Dataset, sink):
    """Write rows with original labels; values use shortest round-trip repr."""
    inverse = {i: c for c, i in dataset.label_map.items()}
    X = dataset.features.tocsr()
    X.sort_indices()
    for i in range(dataset.n):
        lo, hi = X.indptr[i], X.indptr[i + 1]
        parts = [str(inverse[int(dataset.labels[i])])]
        parts += [f"{j + 1}:{_fmt(v)}" for j, v in zip(X.indices[lo:hi], X.data[lo:hi])]
        sink.write(" ".join(parts) + "\n")


def _float_out(v):
    # 17 significant digits reproduce any double exactly
    return "%.17g" % v


def write_trace(records, fmt, sink):
    """Serialize trace records as ``csv`` (fixed column order) or ``json``.

    A missing ``theory_bound`` is written as an empty CSV field or ``null``.
    """
    if fmt == "csv":
        w = csv.writer(sink, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        for r in records:
            c = r.counters
            w.writerow([r.k, _float_out(r.wall_ms), _float_out(r.fw_gap),
                        "" if r.theory_bound is None else _float_out(r.theory_bound),
                        c.fo, c.sfo, c.ifo, c.lo])
    elif fmt == "json":
        # json writes floats with the shortest round-trip repr
        rows = [{"k": r.k, "wall_ms": r.wall_ms, "fw_gap": r.fw_gap,
                 "theory_bound": r.theory_bound, **r.counters.as_dict()} for r in records]
        json.dump(rows, sink)
        sink.write("\n")
    else:
        raise ValueError(f"unknown trace format {fmt!r} (use csv or json)")


class TraceParseError(ValueError):
    pass


def _record_from(row):
    try:
        bound = row.get("theory_bound")
        bound = None if bound in ("", None) else float(bound)
        return TraceRecord(int(row["k"]), float(row["wall_ms"]), float(row["fw_gap"]), bound,
                           OracleCounters(**{k: int(row.get(k) or 0) for k in ORACLE_KINDS}))
    except (KeyError, TypeError, ValueError) as exc:
        raise TraceParseError(f"malformed trace row {row!r}: {exc}") from None


def read_trace(stream, fmt=None):
    """Parse a trace written by :func:`write_trace`.

    The format is sniffed from the first non-blank character when ``fmt`` is
    None. A CSV without a ``theory_bound`` column is accepted (bounds None).
    """
    text = stream.read()
    if fmt is None:
        fmt = "json" if text.lstrip().startswith("[") else "csv"
    if fmt == "json":
        try:
            rows = json.loads(text)
        except json.JSONDecodeError as exc:
            raise TraceParseError(f"malformed JSON trace: {exc}") from None
        if not isinstance(rows, list):
            raise TraceParseError("JSON trace must be an array")
    elif fmt == "csv":
        reader = csv.DictReader(io.StringIO(text))
        missing = {"k", "wall_ms", "fw_gap"} - set(reader.fieldnames or ())
        if missing:
            raise TraceParseError(f"trace is missing columns {sorted(missing)}")
        rows = list(reader)
    else:
        raise ValueError(f"unknown trace format {fmt!r}")
    return [_record_from(r) for r in rows]
