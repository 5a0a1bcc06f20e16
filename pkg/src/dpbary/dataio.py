"""CSV and JSON serialization for measures, regions, and manifests.

Measure CSV format: header ``x1,...,xd[,weight]``, one atom per row, decimal
point numbers (locale-independent), floats printed with shortest round-trip
precision.  Lines starting with ``#`` are metadata comments and are ignored
on ingestion.
"""

from __future__ import annotations

import csv
import json
import warnings
from pathlib import Path
from typing import Optional

import numpy as np

from .geometry import RegionPolygon
from .measures import DiscreteMeasure

WEIGHT_COLUMN = "weight"


def _fmt(x: float) -> str:
    return repr(float(x))


def emit_measure_csv(measure: DiscreteMeasure, path, metadata: Optional[dict] = None) -> None:
    """Write a measure; metadata lands in leading ``# key=value`` lines."""
    path = Path(path)
    d = measure.dim
    header = [f"x{i + 1}" for i in range(d)] + [WEIGHT_COLUMN]
    with path.open("w", newline="") as fh:
        for key, value in (metadata or {}).items():
            fh.write(f"# {key}={value}\n")
        writer = csv.writer(fh)
        writer.writerow(header)
        for point, weight in zip(measure.points, measure.weights):
            writer.writerow([_fmt(v) for v in point] + [_fmt(weight)])


def _is_float(token: str) -> bool:
    try:
        float(token)
        return True
    except ValueError:
        return False


def ingest_measure_csv(path) -> DiscreteMeasure:
    """Read a measure; a missing weight column means uniform weights.

    Headerless files are treated as pure coordinate rows.  Ragged rows and
    non-finite values are rejected; weights off normalization by more than
    1e-6 are renormalized with a warning.
    """
    path = Path(path)
    rows: list[list[str]] = []
    with path.open(newline="") as fh:
        for line in fh:
            if line.startswith("#") or not line.strip():
                continue
            rows.append(next(csv.reader([line])))
    if not rows:
        raise ValueError(f"{path} holds no data rows")

    has_weight = False
    if not all(_is_float(tok) for tok in rows[0]):
        header = [tok.strip().lower() for tok in rows[0]]
        has_weight = bool(header) and header[-1] == WEIGHT_COLUMN
        rows = rows[1:]
        if not rows:
            raise ValueError(f"{path} holds a header but no data rows")

    width = len(rows[0])
    values = np.empty((len(rows), width))
    for i, row in enumerate(rows):
        if len(row) != width:
            raise ValueError(f"{path}: row {i + 1} has {len(row)} fields, expected {width}")
        try:
            values[i] = [float(tok) for tok in row]
        except ValueError as exc:
            raise ValueError(f"{path}: row {i + 1} does not parse as numbers") from exc
    if not np.all(np.isfinite(values)):
        raise ValueError(f"{path} contains non-finite values")

    if has_weight:
        points, weights = values[:, :-1], values[:, -1]
        if np.any(weights < 0):
            raise ValueError(f"{path}: negative weights")
        total = weights.sum()
        if total <= 0:
            raise ValueError(f"{path}: weights sum to {total}")
        if abs(total - 1.0) > 1e-6:
            warnings.warn(f"{path}: weights sum to {total:.6g}; renormalizing", stacklevel=2)
        weights = weights / total
        return DiscreteMeasure(points, weights)
    return DiscreteMeasure.uniform(values)


def load_region_json(path) -> RegionPolygon:
    """Region file: a JSON list of rings, each a list of [x, y] pairs."""
    with Path(path).open() as fh:
        rings = json.load(fh)
    return RegionPolygon(rings)


def save_region_json(region: RegionPolygon, path) -> None:
    payload = [ring.tolist() for ring in region.rings]
    with Path(path).open("w") as fh:
        json.dump(payload, fh)


def write_json(payload: dict, path) -> None:
    with Path(path).open("w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
