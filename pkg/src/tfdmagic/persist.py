"""Atomic result files: CSV with fixed 17-significant-digit numbers, JSON.

Every file is written to a temporary sibling and renamed into place, so an
interrupted run never leaves a partial output file.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np


def format_number(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, str):
        return value
    x = float(value)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return f"{x:.17g}"


def atomic_write_text(path: str | os.PathLike, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def csv_text(columns: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        if len(row) != len(columns):
            raise ValueError(f"row has {len(row)} fields, header has {len(columns)}")
        writer.writerow([format_number(v) for v in row])
    return buf.getvalue()


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else format_number(x)
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


def json_text(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n"


def write_table(path: str | os.PathLike, columns: Sequence[str], rows, fmt: str = "csv") -> Path:
    """Write a table as CSV (default) or as a JSON list of records."""
    rows = [list(r) for r in rows]
    if fmt == "csv":
        return atomic_write_text(Path(path).with_suffix(".csv"), csv_text(columns, rows))
    if fmt == "json":
        records = [dict(zip(columns, r)) for r in rows]
        return atomic_write_text(Path(path).with_suffix(".json"), json_text({"columns": list(columns), "rows": records}))
    raise ValueError(f"unknown format {fmt!r}")


def write_json(path: str | os.PathLike, obj) -> Path:
    return atomic_write_text(path, json_text(obj))


def _column(values: list) -> np.ndarray:
    try:
        return np.array([math.nan if v in ("", None) else float(v) for v in values], dtype=float)
    except (TypeError, ValueError):
        return np.array(values, dtype=object)


def read_table(path: str | os.PathLike) -> dict[str, np.ndarray]:
    """Read a table written by :func:`write_table` (CSV or JSON) into columns.

    Numeric columns come back as float arrays (empty cells and ``nan`` as NaN);
    anything else, e.g. status labels, as object arrays of strings.
    """
    path = Path(path)
    if path.suffix == ".json":
        payload = json.loads(path.read_text(encoding="utf-8"))
        header = payload["columns"]
        rows = [[rec.get(name) for name in header] for rec in payload["rows"]]
    else:
        with open(path, encoding="utf-8", newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            rows = list(reader)
    return {name: _column([row[k] for row in rows]) for k, name in enumerate(header)}
