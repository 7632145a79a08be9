"""Report assembly, atomic persistence, and run comparison."""

from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path

import numpy as np

from . import __version__

SCHEMA_VERSION = 1
ABSENT = "absent"


def _jsonable(value):
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_jsonable(v) for v in value.tolist()]
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, float) and value != value:  # NaN
        return None
    return value


def build_report(sections: dict, config_hash: str, seed: int, overrides=()) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "provenance": {
            "config_hash": config_hash,
            "seed": seed,
            "version": __version__,
            "overrides": list(overrides),
        },
        "sections": _jsonable(sections),
    }


def write_report(report: dict, path) -> None:
    """Serialize deterministically; the file appears atomically or not at all."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    text = json.dumps(report, sort_keys=True, indent=2) + "\n"
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-report-")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_series_csv(series: dict, path) -> None:
    """Plot-ready CSV: one column per named series, row per slot."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    names = sorted(series)
    arrays = [np.asarray(series[n]).ravel() for n in names]
    n = max((len(a) for a in arrays), default=0)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-series-")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(",".join(["slot"] + names) + "\n")
            for i in range(n):
                row = [str(i)]
                for a in arrays:
                    row.append(f"{a[i]:.10g}" if i < len(a) else "")
                fh.write(",".join(row) + "\n")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_report(path) -> dict:
    with open(path) as fh:
        return json.load(fh)


def compare_runs(report_a: dict, report_b: dict) -> dict:
    """Per-metric deltas between two reports of the same schema version."""
    if report_a.get("schema_version") != report_b.get("schema_version"):
        raise ValueError("schema version mismatch between reports")
    diff = _compare(report_a.get("sections", {}), report_b.get("sections", {}))
    return {"schema_version": report_a["schema_version"], "diff": diff}


def _compare(a, b):
    if isinstance(a, dict) or isinstance(b, dict):
        a = a if isinstance(a, dict) else {}
        b = b if isinstance(b, dict) else {}
        out = {}
        for key in sorted(set(a) | set(b)):
            if key not in a or key not in b:
                out[key] = ABSENT
            else:
                out[key] = _compare(a[key], b[key])
        return out
    if isinstance(a, (int, float)) and isinstance(b, (int, float)) and not isinstance(a, bool):
        delta = b - a
        rel = delta / abs(a) if a else None
        entry = {"a": a, "b": b, "delta": delta, "rel": rel}
        if a * b < 0:
            entry["sign_change"] = True
        return entry
    return {"a": a, "b": b, "equal": a == b}
