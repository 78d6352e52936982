"""Structured output: JSON reports and CSV series, each with a header block.

Reports are deterministic: keys are sorted, floats use ``repr`` (shortest
round-trip form) in JSON and 17 significant digits in CSV, and wall-clock
fields are kept out of the report files (they go to ``timings.json``).
"""

from __future__ import annotations

import csv
import io as _io
import json
import math
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from . import __version__
from .params import Params

TOOL_NAME = "pmeshrink"
TIMING_KEYS = frozenset({"elapsed", "runtime", "wall_time"})
CSV_FLOAT = "{:.17g}"


def header(params: Params | None = None, tolerances: Mapping | None = None, **extra) -> dict:
    """Header block carried by every emitted file."""
    out = {"tool": TOOL_NAME, "version": __version__}
    if params is not None:
        out["params"] = params.as_dict()
    out["tolerances"] = dict(tolerances or {})
    out.update(extra)
    return to_jsonable(out)


def to_jsonable(obj, drop: frozenset = frozenset()):
    """Convert numpy containers/scalars recursively; drop keys listed in ``drop``."""
    if isinstance(obj, Mapping):
        return {str(k): to_jsonable(v, drop) for k, v in obj.items() if str(k) not in drop}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v, drop) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist(), drop)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    if hasattr(obj, "value") and hasattr(obj, "name") and not isinstance(obj, (str, int)):
        return obj.value  # enums
    return obj


def dumps(payload, hdr: Mapping | None = None, keep_timings: bool = False) -> str:
    drop = frozenset() if keep_timings else TIMING_KEYS
    doc = {"header": to_jsonable(hdr or header()), "data": to_jsonable(payload, drop)}
    return json.dumps(doc, sort_keys=True, indent=2, allow_nan=False) + "\n"


def write_json(path: str | Path, payload, hdr: Mapping | None = None, keep_timings: bool = False) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(payload, hdr, keep_timings), encoding="utf-8")
    return path


def read_json(path: str | Path) -> tuple[dict, object]:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    return doc["header"], doc["data"]


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return CSV_FLOAT.format(float(v))
    return str(v)


def csv_text(columns: Mapping[str, Iterable], hdr: Mapping | None = None) -> str:
    """CSV with a ``#``-prefixed JSON header line and fixed float formatting."""
    names = list(columns)
    cols = [list(np.asarray(columns[n]).tolist()) if not isinstance(columns[n], list) else columns[n]
            for n in names]
    lengths = {len(c) for c in cols}
    if len(lengths) > 1:
        raise ValueError(f"columns have different lengths: {sorted(lengths)}")
    buf = _io.StringIO()
    buf.write("# " + json.dumps(to_jsonable(hdr or header()), sort_keys=True) + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(names)
    for row in zip(*cols):
        writer.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def write_csv(path: str | Path, columns: Mapping[str, Iterable], hdr: Mapping | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(csv_text(columns, hdr), encoding="utf-8")
    return path


def read_csv(path: str | Path) -> tuple[dict, dict]:
    """Inverse of :func:`write_csv`; numeric columns come back as float arrays."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    hdr = json.loads(lines[0][2:]) if lines and lines[0].startswith("# ") else {}
    rows = list(csv.reader(lines[1:] if hdr else lines))
    names, body = rows[0], rows[1:]
    out = {}
    for j, name in enumerate(names):
        col = [r[j] for r in body]
        try:
            out[name] = np.array([float(v) for v in col])
        except ValueError:
            out[name] = col
    return hdr, out
