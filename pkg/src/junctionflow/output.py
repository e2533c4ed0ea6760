"""CSV and JSON writers with fixed headers and 17 significant digits."""
from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

SNAPSHOT_MICRO_HEADER = ("t", "branch", "x_left", "x_right", "rho")
SNAPSHOT_GRID_HEADER = ("t", "branch", "cell_center_x", "rho")
VEHICLE_HEADER = ("t", "i", "x", "road")
TRACE_HEADER = ("t", "p0", "p1", "p2", "F0", "F1", "F2")
TV_HEADER = ("t", "green_road", "tv")
CONVERGENCE_HEADER = ("epsilon", "period", "N", "l1_error", "tv_max")
ENTROPY_HEADER = ("k", "hat", "tc", "tw", "xc", "xw", "residual", "bound", "passed")


def fmt(x) -> str:
    """Cell text: integers as-is, floats with 17 significant digits, ``None`` empty."""
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return str(x)


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(fmt(v) for v in row) + "\n")


def _encode(x, indent: int, level: int) -> str:
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if isinstance(x, dict):
        if not x:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {_encode(v, indent, level + 1)}" for k, v in x.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(x, (list, tuple, np.ndarray)):
        x = list(x)
        if not x:
            return "[]"
        if all(not isinstance(v, (dict, list, tuple, np.ndarray)) for v in x):
            return "[" + ", ".join(_encode(v, indent, level + 1) for v in x) + "]"
        return "[\n" + ",\n".join(pad + _encode(v, indent, level + 1) for v in x) + "\n" + end + "]"
    if x is None:
        return "null"
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        # JSON has no infinities or NaN
        return format(x, ".17g") if math.isfinite(x) else "null"
    return json.dumps(str(x))


def to_json(obj, indent: int = 2) -> str:
    return _encode(obj, indent, 0) + "\n"


def write_json(path: Path, obj) -> None:
    Path(path).write_text(to_json(obj), encoding="utf-8")
