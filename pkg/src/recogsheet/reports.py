"""Deterministic CSV/JSON writers shared by every report."""

import csv
import json
from pathlib import Path

from .errors import DataIOError


def fmt(v: float) -> str:
    return "%.10g" % v


def write_rows(path, rows) -> Path:
    path = Path(path)
    try:
        with open(path, "w", newline="") as fh:
            csv.writer(fh, lineterminator="\n").writerows(rows)
    except OSError as exc:
        raise DataIOError(f"cannot write {path}: {exc}") from exc
    return path


def write_json(path, obj) -> Path:
    path = Path(path)
    try:
        path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")
    except OSError as exc:
        raise DataIOError(f"cannot write {path}: {exc}") from exc
    return path
