"""CSV emission and slope fitting shared by the studies and the CLI.

All floats are written with repr-exact %.17g so reruns produce
byte-identical files; writes go through a temporary file and os.replace
so readers never observe a partial CSV.
"""
from __future__ import annotations

import hashlib
import os
import tempfile
from collections.abc import Iterable, Sequence

import numpy as np

__all__ = [
    "format_value",
    "config_digest",
    "write_csv",
    "fit_decay_slope",
]

SLOPE_FLOOR = 1e-13


def format_value(v) -> str:
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "%.17g" % float(v)
    return str(v)


def config_digest(pairs: dict) -> str:
    """Short stable digest of a resolved key-value configuration."""
    canon = "\n".join(f"{k}={pairs[k]}" for k in sorted(pairs))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()[:12]


def write_csv(path: str, header: Sequence[str], rows: Iterable[Sequence],
              comments: Sequence[str] = ()) -> None:
    """Write comment lines, a header line, and data rows atomically."""
    lines = [f"# {c}" for c in comments]
    lines.append(",".join(header))
    for row in rows:
        lines.append(",".join(format_value(v) for v in row))
    body = "\n".join(lines) + "\n"
    d = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-csv-")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(body)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_text(path: str, text: str) -> None:
    """Atomic plain-text write, same discipline as write_csv."""
    d = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-txt-")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def fit_decay_slope(hs, values, drop_below: float = SLOPE_FLOOR) -> float:
    """Least-squares slope of log2(value) against log2(h).

    Values at or below drop_below are treated as converged-to-rounding and
    excluded; with fewer than two surviving points the slope is nan.
    A positive result means decay under refinement.
    """
    h = np.asarray(hs, dtype=float)
    v = np.asarray(values, dtype=float)
    if h.shape != v.shape:
        raise ValueError("h and value arrays must have matching shapes")
    mask = v > drop_below
    if int(mask.sum()) < 2:
        return float("nan")
    slope = np.polyfit(np.log2(h[mask]), np.log2(v[mask]), 1)[0]
    return float(slope)
