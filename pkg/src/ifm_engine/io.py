"""Byte-stable CSV and JSON emission.

Floats are written with a fixed number of significant digits using Python's
own formatting (never the locale), and JSON keys keep insertion order, so the
same inputs always produce the same bytes.
"""
from __future__ import annotations

import json
import math
import sys
from typing import Iterable, Sequence

import numpy as np


def format_value(value, precision: int) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        x = float(value)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        if x == 0:
            return "0"
        return f"{x:.{precision}g}"
    return str(value)


def render_csv(rows: Iterable[dict], columns: Sequence[str], precision: int) -> str:
    lines = [",".join(columns)]
    for row in rows:
        cells = []
        for c in columns:
            text = format_value(row[c], precision)
            if any(ch in text for ch in ',"\n'):
                text = '"' + text.replace('"', '""') + '"'
            cells.append(text)
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def _rounded(obj, precision: int):
    if isinstance(obj, dict):
        return {str(k): _rounded(v, precision) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_rounded(v, precision) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_rounded(v, precision) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if not math.isfinite(x):
            return None
        return 0.0 if x == 0 else float(f"{x:.{precision}g}")
    if isinstance(obj, complex):
        return [_rounded(obj.real, precision), _rounded(obj.imag, precision)]
    return obj


def render_json(obj, precision: int) -> str:
    return json.dumps(_rounded(obj, precision), indent=2, allow_nan=False) + "\n"


def emit(text: str, path: str | None) -> None:
    """Write to ``path`` (overwriting) or to stdout when no path is given."""
    if path is None or path == "-":
        sys.stdout.write(text)
        return
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
