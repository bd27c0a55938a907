"""Deterministic report emission: canonical JSON, CSV, plot-data files.

Byte-identical output for identical inputs: keys are sorted, floats use
their shortest round-trip representation, no timestamps.
"""

import json
import math
import os

import numpy as np

SCHEMA_VERSION = 1


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if hasattr(obj, "to_dict"):
        return _jsonable(obj.to_dict())
    if isinstance(obj, np.generic):
        obj = obj.item()
    if isinstance(obj, float):
        if math.isnan(obj):
            return None
        if math.isinf(obj):
            return repr(obj)
    return obj


def canonical_json(obj):
    return json.dumps(_jsonable(obj), sort_keys=True, indent=2) + "\n"


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_csv(path, columns, rows):
    """Rows are dicts; columns fixes the order. Comma separated, '.' decimal."""
    lines = [",".join(columns)]
    for row in rows:
        lines.append(",".join(_fmt(row.get(c, "")) for c in columns))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    return path


def write_curve(path, xs, ys):
    """Two-column whitespace-separated plot data."""
    with open(path, "w") as fh:
        for x, y in zip(xs, ys):
            fh.write(f"{_fmt(float(x))} {_fmt(float(y))}\n")
    return path


def emit_report(report, outdir, csv_columns=None, csv_rows=None, curves=None):
    """Write report.json (+ optional data.csv and per-curve .dat files).

    Returns the dict of written paths.  Repeated calls with identical
    inputs produce byte-identical files.
    """
    os.makedirs(outdir, exist_ok=True)
    paths = {}
    rp = os.path.join(outdir, "report.json")
    with open(rp, "w") as fh:
        fh.write(canonical_json(report))
    paths["report"] = rp
    if csv_rows is not None:
        columns = csv_columns or (list(csv_rows[0].keys()) if csv_rows else [])
        paths["csv"] = write_csv(os.path.join(outdir, "data.csv"),
                                 columns, csv_rows)
    for name, (xs, ys) in (curves or {}).items():
        paths[name] = write_curve(os.path.join(outdir, f"{name}.dat"), xs, ys)
    return paths
