"""svmlight reading/writing and trace export.

External indices are 1-based, internal ones 0-based; the shift happens here
and nowhere else. Floats are written with 17 significant digits, which
round-trips every double exactly.
"""
from __future__ import annotations

import csv
import io
import json
import math
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from .errors import DomainError, SvmlightParseError
from .model import Dataset

TRACE_FIELDS = ("round", "objective", "gap", "test_error")


def fmt_float(x: float) -> str:
    x = float(x)
    if math.isnan(x):
        return "nan"
    return format(x, ".17g")


def _parse_index(tok: str, lineno: int) -> int:
    try:
        j = int(tok)
    except ValueError:
        raise SvmlightParseError(f"malformed token: bad index {tok!r}", lineno) from None
    if j < 1:
        raise SvmlightParseError(f"index must be >= 1, got {j}", lineno)
    return j


def parse_svmlight(stream, dim: int | None = None, loss="logistic", lam: float = 0.0) -> Dataset:
    """Read ``label [qid:g] idx:val ...`` lines into a Dataset.

    '#' starts a comment; blank lines are skipped. Explicit zero values are
    dropped. ``qid`` values, when present on every line, become group ids.
    """
    indptr, indices, data, labels, groups = [0], [], [], [], []
    max_index = 0
    for lineno, raw in enumerate(stream, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        try:
            label = float(tokens[0])
        except ValueError:
            raise SvmlightParseError(f"malformed token: bad label {tokens[0]!r}", lineno) from None
        if not math.isfinite(label):
            raise SvmlightParseError(f"malformed token: non-finite label {tokens[0]!r}", lineno)
        rest = tokens[1:]
        if rest and rest[0].startswith("qid:"):
            try:
                groups.append(int(rest[0][4:]))
            except ValueError:
                raise SvmlightParseError(f"malformed token: bad qid {rest[0]!r}", lineno) from None
            rest = rest[1:]
        elif groups:
            raise SvmlightParseError("qid missing (earlier lines have one)", lineno)
        prev = 0
        for tok in rest:
            head, sep, tail = tok.partition(":")
            if not sep:
                raise SvmlightParseError(f"malformed token {tok!r}", lineno)
            j = _parse_index(head, lineno)
            if j == prev:
                raise SvmlightParseError(f"duplicate index {j}", lineno)
            if j < prev:
                raise SvmlightParseError(f"non-increasing index {j} after {prev}", lineno)
            prev = j
            try:
                v = float(tail)
            except ValueError:
                raise SvmlightParseError(f"malformed token: bad value {tok!r}", lineno) from None
            if not math.isfinite(v):
                raise SvmlightParseError(f"malformed token: non-finite value {tok!r}", lineno)
            if dim is not None and j > dim:
                raise SvmlightParseError(f"index {j} exceeds dimension {dim}", lineno)
            if v != 0.0:
                indices.append(j - 1)
                data.append(v)
        max_index = max(max_index, prev)
        labels.append(label)
        indptr.append(len(indices))
        if groups and len(groups) != len(labels):
            raise SvmlightParseError("qid missing (earlier lines have none)", lineno)
    if not labels:
        raise SvmlightParseError("no data lines", 0)
    d = max_index if dim is None else int(dim)
    return Dataset.from_csr(np.array(indptr), np.array(indices, dtype=np.int64),
                            np.array(data, dtype=np.float64), np.array(labels), max(d, 1),
                            loss, lam, groups or None)


def load_svmlight(path, dim: int | None = None, loss="logistic", lam: float = 0.0) -> Dataset:
    with open(path, encoding="utf-8") as fh:
        return parse_svmlight(fh, dim, loss, lam)


def write_svmlight(dataset: Dataset, stream) -> None:
    for i in range(dataset.n):
        lo, hi = dataset.indptr[i], dataset.indptr[i + 1]
        parts = [fmt_float(dataset.y[i])]
        if dataset.groups is not None:
            parts.append(f"qid:{int(dataset.groups[i])}")
        parts.extend(f"{j + 1}:{fmt_float(v)}"
                     for j, v in zip(dataset.indices[lo:hi].tolist(), dataset.data[lo:hi].tolist()))
        stream.write(" ".join(parts) + "\n")


@contextmanager
def _sink(target):
    if isinstance(target, (str, Path)):
        with open(target, "w", encoding="utf-8", newline="") as fh:
            yield fh
    else:
        yield target


def _row(record) -> list[str]:
    return [str(record.round), fmt_float(record.objective), fmt_float(record.gap),
            fmt_float(record.test_error)]


def write_trace(trace, fmt: str = "csv", target=None) -> str | None:
    """Write a trace as CSV or JSON lines to a path or text stream.

    With ``target=None`` the text is returned instead. In jsonl, NaN
    becomes null.
    """
    return write_traces([(None, trace)], fmt, target)


def write_traces(named, fmt: str = "csv", target=None) -> str | None:
    """Like ``write_trace`` for several ``(name, trace)`` pairs, adding an ``algo`` column.

    A single pair named ``None`` gives the plain four-column layout.
    """
    named = list(named)
    merged = not (len(named) == 1 and named[0][0] is None)
    if fmt not in ("csv", "jsonl"):
        raise DomainError(f"unknown trace format {fmt!r}")
    buf = io.StringIO()
    if fmt == "csv":
        w = csv.writer(buf, lineterminator="\n")
        w.writerow((("algo",) if merged else ()) + TRACE_FIELDS)
        for name, trace in named:
            for rec in trace.records:
                w.writerow(([name] if merged else []) + _row(rec))
    else:
        for name, trace in named:
            for rec in trace.records:
                obj = {"algo": name} if merged else {}
                obj["round"] = rec.round
                for key in TRACE_FIELDS[1:]:
                    v = float(getattr(rec, key))
                    obj[key] = None if math.isnan(v) else v
                buf.write(json.dumps(obj) + "\n")
    text = buf.getvalue()
    if target is None:
        return text
    with _sink(target) as fh:
        fh.write(text)
    return None


def read_trace_csv(stream) -> list[dict]:
    """Parse a (possibly merged) trace CSV back into dicts of floats."""
    out = []
    for row in csv.DictReader(stream):
        rec = {k: (int(v) if k == "round" else v if k == "algo" else float(v)) for k, v in row.items()}
        out.append(rec)
    return out


def read_config(path) -> dict[str, str]:
    """Flat ``key = value`` file; '#' comments and blank lines ignored."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep or not key.strip():
                raise DomainError(f"{path}:{lineno}: expected key=value")
            out[key.strip().replace("-", "_")] = value.strip()
    return out

