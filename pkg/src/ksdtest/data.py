"""Reading sample matrices from CSV and JSON files."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from ksdtest.errors import InputError

__all__ = ["SampleParseError", "ingest_samples", "parse_csv", "parse_json"]


class SampleParseError(InputError):
    """Malformed sample file; ``line`` is 1-based, or None when not applicable."""

    def __init__(self, message: str, line: int | None = None, path=None):
        where = "" if path is None else f"{path}: "
        at = "" if line is None else f"line {line}: "
        super().__init__(f"{where}{at}{message}")
        self.message = message
        self.line = line
        self.path = path


def _to_float(cell: str, line: int, col: int) -> float:
    try:
        x = float(cell)
    except ValueError:
        raise SampleParseError(f"column {col}: non-numeric cell {cell.strip()!r}", line) from None
    if not np.isfinite(x):
        raise SampleParseError(f"column {col}: non-finite value {cell.strip()!r}", line)
    return x


def parse_csv(text: str, header: bool = False) -> np.ndarray:
    rows = []
    width = None
    skipped_header = not header
    for line_no, row in enumerate(csv.reader(text.splitlines()), start=1):
        if not row or all(not c.strip() for c in row):
            continue
        if row[0].lstrip().startswith("#"):
            continue
        if not skipped_header:
            skipped_header = True
            continue
        if width is None:
            width = len(row)
        elif len(row) != width:
            raise SampleParseError(f"expected {width} columns, found {len(row)}", line_no)
        rows.append([_to_float(c, line_no, j + 1) for j, c in enumerate(row)])
    if not rows:
        raise SampleParseError("no sample rows found (empty file)")
    return np.array(rows, dtype=float)


def parse_json(text: str) -> np.ndarray:
    if not text.strip():
        raise SampleParseError("no sample rows found (empty file)")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SampleParseError(f"invalid JSON: {exc.msg}", exc.lineno) from None
    if isinstance(data, dict) and "samples" in data:
        data = data["samples"]
    if not isinstance(data, list) or not data:
        raise SampleParseError("expected a nonempty array of rows")
    rows = []
    width = None
    for i, row in enumerate(data, start=1):
        if not isinstance(row, list):
            row = [row]
        if width is None:
            width = len(row)
        elif len(row) != width:
            raise SampleParseError(f"row {i}: expected {width} values, found {len(row)}")
        vals = []
        for j, v in enumerate(row, start=1):
            if isinstance(v, bool) or not isinstance(v, (int, float)) or not np.isfinite(v):
                raise SampleParseError(f"row {i}, column {j}: not a finite number: {v!r}")
            vals.append(float(v))
        rows.append(vals)
    if width == 0:
        raise SampleParseError("rows must contain at least one value")
    return np.array(rows, dtype=float)


def ingest_samples(path, format: str | None = None, header: bool = False) -> np.ndarray:
    """Load an ``(n, d)`` sample matrix, preserving row order.

    ``format`` is ``"csv"`` or ``"json"``; when omitted it is taken from the
    file suffix. Lines starting with ``#`` in CSV files are comments.
    """
    path = Path(path)
    if format is None:
        format = "json" if path.suffix.lower() == ".json" else "csv"
    if format not in ("csv", "json"):
        raise InputError(f"format must be 'csv' or 'json', got {format!r}")
    if not path.is_file():
        raise InputError(f"input file not found: {path}")
    text = path.read_text(encoding="utf-8")
    try:
        return parse_csv(text, header=header) if format == "csv" else parse_json(text)
    except SampleParseError as exc:
        raise SampleParseError(exc.message, exc.line, path) from None
