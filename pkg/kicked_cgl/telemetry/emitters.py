"""CSV and JSON emitters with fixed column schemas.

Floats are written with ``repr`` so a rerun with the same config and seed
produces byte-identical files.
"""

from __future__ import annotations

import csv
import json
import math
from collections.abc import Iterable, Sequence
from pathlib import Path
from typing import Any

import numpy as np

FLOW_COLUMNS = ("time", "H", "enstrophy_integral", "norm_h1")
STOPPING_COLUMNS = ("ell", "unresolved", "cycles", "rho", "t1", "t2", "t3", "sigma", "window", "steps")
MIXING_COLUMNS = ("t", "distance", "ci_low", "ci_high")
DRIFT_COLUMNS = ("grid_index", "norm_h1", "F0", "n", "expected_F")
KHASMINSKII_COLUMNS = ("functional", "lhs", "lhs_low", "lhs_high", "rhs", "rhs_low", "rhs_high", "passed")
ORDER_COLUMNS = ("state", "substeps", "error", "ratio")
DISSIPATION_COLUMNS = ("state", "time", "H", "bound", "violation")
COUPLING_COLUMNS = ("shift", "empirical", "tv", "stderr", "within_3se")
POISSON_COLUMNS = ("lam", "t", "empirical", "stderr", "exact")


def trajectory_columns(n_coeffs: int) -> tuple[str, ...]:
    cols = ["t", "norm_h1", "H"]
    for j in range(1, n_coeffs + 1):
        cols += [f"re_c{j}", f"im_c{j}"]
    return tuple(cols)


def _cell(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, np.integer):
        return str(int(value))
    return str(value)


def write_csv(path: str | Path, columns: Sequence[str], rows: Iterable[Sequence[Any] | dict[str, Any]]) -> Path:
    """Write ``rows`` under a fixed header; dict rows are ordered by ``columns``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            values = [row.get(c) for c in columns] if isinstance(row, dict) else list(row)
            if len(values) != len(columns):
                raise ValueError(f"row has {len(values)} cells, expected {len(columns)}")
            writer.writerow([_cell(v) for v in values])
    return path


def _jsonable(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_jsonable(v) for v in value.tolist()]
    if isinstance(value, (np.bool_,)):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else repr(value)
    return value


def write_json(path: str | Path, payload: Any) -> Path:
    """Canonical JSON (sorted keys, non-finite floats as strings)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        json.dump(_jsonable(payload), f, indent=2, sort_keys=True)
        f.write("\n")
    return path
