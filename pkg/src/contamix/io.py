"""CSV ingestion.

Dialect: comma separated, UTF-8, ``.`` as decimal mark, optional header row.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import DataError

MISSING = {"", "na", "nan", "null", "none", "?"}


@dataclass
class DataMatrix:
    """Observations (n, p) with stable 1-based row identifiers and column names."""

    values: np.ndarray
    row_ids: list
    columns: list
    labels: list | None = field(default=None)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def p(self) -> int:
        return self.values.shape[1]


def _is_number(cell: str) -> bool:
    try:
        float(cell)
    except ValueError:
        return False
    return True


def _read_rows(path):
    path = Path(path)
    if not path.is_file():
        raise DataError(f"input file not found: {path}")
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = [r for r in csv.reader(fh) if any(c.strip() for c in r)]
    except (UnicodeDecodeError, csv.Error) as exc:
        raise DataError(f"cannot parse {path}: {exc}") from exc
    if not rows:
        raise DataError(f"{path} is empty")
    width = len(rows[0])
    for i, r in enumerate(rows, start=1):
        if len(r) != width:
            raise DataError(f"line {i} has {len(r)} fields, expected {width}")
    return rows


def _resolve(spec, header, width):
    """Map a column name or 0-based index to a position."""
    if isinstance(spec, int) or (isinstance(spec, str) and spec.strip().lstrip("-").isdigit()):
        idx = int(spec)
        if not 0 <= idx < width:
            raise DataError(f"column index {idx} out of range (file has {width} columns)")
        return idx
    if header is None:
        raise DataError(f"column {spec!r} requested by name but the file has no header")
    name = str(spec).strip()
    if name not in header:
        raise DataError(f"column {name!r} not found; available: {', '.join(header)}")
    return header.index(name)


def ingest_csv(path, columns=None, label_column=None) -> DataMatrix:
    """Read the selected numeric columns of a CSV file.

    Parameters
    ----------
    columns : sequence of str or int, optional
        Column names (header required) or 0-based indices. Defaults to every
        column except ``label_column``.
    label_column : str or int, optional
        Column holding known class labels, kept as strings.

    Rows with missing cells are rejected; the error lists their row numbers
    (1-based, counting data rows only).
    """
    rows = _read_rows(path)
    width = len(rows[0])
    header = None
    if not all(_is_number(c) or c.strip().lower() in MISSING for c in rows[0]):
        header = [c.strip() for c in rows[0]]
        rows = rows[1:]
    lab_idx = None if label_column is None else _resolve(label_column, header, width)
    if columns is None:
        sel = [j for j in range(width) if j != lab_idx]
    else:
        sel = [_resolve(c, header, width) for c in columns]
    if not sel:
        raise DataError("no feature columns selected")
    names = [header[j] if header else f"x{j + 1}" for j in sel]
    if not rows:
        return DataMatrix(np.empty((0, len(sel))), [], names, [] if lab_idx is not None else None)

    missing, values = [], np.empty((len(rows), len(sel)))
    for i, r in enumerate(rows):
        for k, j in enumerate(sel):
            cell = r[j].strip()
            if cell.lower() in MISSING:
                missing.append(i + 1)
                break
            try:
                values[i, k] = float(cell)
            except ValueError:
                raise DataError(
                    f"non-numeric value {cell!r} in row {i + 1}, column {names[k]!r}"
                ) from None
            if not np.isfinite(values[i, k]):
                missing.append(i + 1)
                break
    if missing:
        shown = ", ".join(map(str, missing[:20])) + (" ..." if len(missing) > 20 else "")
        raise DataError(f"missing values in row(s) {shown}")
    labels = None
    if lab_idx is not None:
        labels = [r[lab_idx].strip() for r in rows]
    return DataMatrix(values, list(range(1, len(rows) + 1)), names, labels)
