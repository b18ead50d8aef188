"""Deterministic JSON and CSV emission for reports and traces.

Floats are rendered with 17 significant digits, which round-trips every
finite double bit-exactly; dict keys are sorted. Identical inputs
therefore serialize to identical bytes. Non-finite numbers are rejected:
report builders must map them to null explicitly.
"""

from __future__ import annotations

import math
from typing import Iterable

import numpy as np


def format_float(x: float) -> str:
    """Render a finite double with 17 significant digits, round-trip exact."""
    x = float(x)
    if not math.isfinite(x):
        raise ValueError(f"cannot serialize non-finite number {x}")
    if x == 0.0:
        return "-0.0" if math.copysign(1.0, x) < 0 else "0.0"
    s = f"{x:.17g}"
    if "." not in s and "e" not in s and "E" not in s:
        s += ".0"
    return s


def _escape(s: str) -> str:
    out = ['"']
    for ch in s:
        if ch == '"':
            out.append('\\"')
        elif ch == "\\":
            out.append("\\\\")
        elif ch == "\n":
            out.append("\\n")
        elif ch == "\t":
            out.append("\\t")
        elif ch == "\r":
            out.append("\\r")
        elif ord(ch) < 0x20:
            out.append(f"\\u{ord(ch):04x}")
        else:
            out.append(ch)
    out.append('"')
    return "".join(out)


def _is_scalar(v) -> bool:
    return v is None or isinstance(v, (bool, int, float, str, np.integer, np.floating))


def _emit(obj, indent: int, level: int) -> str:
    pad = " " * (indent * level)
    pad_in = " " * (indent * (level + 1))
    if obj is None:
        return "null"
    if isinstance(obj, bool):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return format_float(float(obj))
    if isinstance(obj, str):
        return _escape(obj)
    if isinstance(obj, np.ndarray):
        obj = obj.tolist()
    if isinstance(obj, (list, tuple)):
        items = list(obj)
        if not items:
            return "[]"
        if all(_is_scalar(v) for v in items):
            return "[" + ", ".join(_emit(v, indent, level) for v in items) + "]"
        body = ",\n".join(pad_in + _emit(v, indent, level + 1) for v in items)
        return "[\n" + body + "\n" + pad + "]"
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        parts = []
        for key in sorted(obj):
            if not isinstance(key, str):
                raise TypeError(f"JSON object keys must be strings, got {key!r}")
            parts.append(pad_in + _escape(key) + ": " + _emit(obj[key], indent, level + 1))
        return "{\n" + ",\n".join(parts) + "\n" + pad + "}"
    raise TypeError(f"cannot serialize {type(obj).__name__} to JSON")


def dumps(obj, indent: int = 2) -> str:
    """Serialize to deterministic JSON text (no trailing newline)."""
    return _emit(obj, indent, 0)


TRACE_HEADER = "n,step_norm,a_priori,a_posteriori,residual"


def trace_csv_lines(rows: Iterable) -> list[str]:
    """CSV lines for an iteration trace, one row per retained iteration."""
    lines = [TRACE_HEADER]
    for r in rows:
        lines.append(
            f"{r.n},{format_float(r.step)},{format_float(r.a_priori)},"
            f"{format_float(r.a_posteriori)},{format_float(r.residual)}"
        )
    return lines


GRID_HEADER = "b,theta_hat,c"


def grid_csv_lines(b_grid, theta_hat) -> list[str]:
    """CSV lines for an estimation grid: b, observed theta, contraction factor."""
    lines = [GRID_HEADER]
    for b, th in zip(b_grid, theta_hat):
        c = th / (b + 1.0)
        lines.append(f"{format_float(b)},{format_float(th)},{format_float(c)}")
    return lines
