"""Locale-free CSV and JSON writers with round-trip float formatting."""
from __future__ import annotations

import io
import json
from pathlib import Path

import numpy as np

FLOAT_FMT = "%.17g"


def fmt(x) -> str:
    """Format a number with 17 significant digits ('.' decimal separator)."""
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    return FLOAT_FMT % float(x)


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    buf.write(",".join(header) + "\n")
    for row in rows:
        buf.write(",".join(fmt(v) for v in row) + "\n")
    return buf.getvalue()


def write_csv(path, header, rows) -> str:
    text = csv_text(header, rows)
    if path is not None:
        Path(path).write_text(text)
    return text


def write_json(path, obj) -> str:
    # repr of a Python float already round-trips exactly
    text = json.dumps(obj, indent=2) + "\n"
    if path is not None:
        Path(path).write_text(text)
    return text


def vectors(a) -> list:
    return [[float(v) for v in row] for row in np.asarray(a).reshape(-1, 3)]
