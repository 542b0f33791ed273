"""Read and write return series as CSV and replay them as a Market.

Format: UTF-8, comma separated, one header row.  An optional leading label
column (dates, round numbers) is recognised by its header name or by a
non-numeric first cell.  The first return column is the index.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from capgame.errors import IngestError
from capgame.strategies import DeterministicMarket

LABEL_HEADERS = {"date", "time", "timestamp", "datetime", "day", "round", "period", "n"}


@dataclass
class ReturnSeries:
    labels: list[str]
    rows: np.ndarray
    dt: float
    source: str = ""
    row_labels: list[str] | None = None
    label_header: str | None = None

    def __post_init__(self):
        self.rows = np.array(self.rows, dtype=float, ndmin=2)
        if self.rows.shape[1] != len(self.labels):
            raise IngestError(f"{len(self.labels)} labels for {self.rows.shape[1]} columns")
        if not np.all(np.isfinite(self.rows)):
            raise IngestError("non-finite return")
        if np.any(self.rows <= -1.0):
            raise IngestError("return <= -1")
        if not self.dt > 0:
            raise IngestError(f"dt must be positive, got {self.dt!r}")

    @property
    def num_rounds(self) -> int:
        return self.rows.shape[0]

    @property
    def num_securities(self) -> int:
        return self.rows.shape[1] - 1


def _parse_float(cell: str) -> float:
    v = float(cell)
    if not math.isfinite(v):
        raise ValueError("non-finite")
    return v


def _is_number(cell: str) -> bool:
    try:
        float(cell)
    except ValueError:
        return False
    return True


def load_csv(path, dt: float) -> ReturnSeries:
    """Parse a CSV of simple returns; errors carry the offending line number."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise IngestError(f"cannot read file: {exc}", path=str(path)) from None
    lines = list(csv.reader(text.splitlines()))
    numbered = [(i + 1, row) for i, row in enumerate(lines) if row and any(c.strip() for c in row)]
    if not numbered:
        raise IngestError("empty file", path=str(path))
    _, header = numbered[0]
    header = [h.strip() for h in header]
    body = numbered[1:]
    if not body:
        raise IngestError("empty series", line=1, path=str(path))

    has_label = header[0].lower() in LABEL_HEADERS or not _is_number(body[0][1][0].strip())
    names = header[1:] if has_label else header
    if not names:
        raise IngestError("no return columns", line=1, path=str(path))

    rows: list[list[float]] = []
    row_labels: list[str] = []
    for lineno, row in body:
        if len(row) != len(header):
            raise IngestError(f"expected {len(header)} fields, got {len(row)}", line=lineno, path=str(path))
        cells = row[1:] if has_label else row
        if has_label:
            row_labels.append(row[0].strip())
        values = []
        for cell in cells:
            cell = cell.strip()
            if not cell:
                raise IngestError("missing value", line=lineno, path=str(path))
            try:
                v = _parse_float(cell)
            except ValueError:
                raise IngestError(f"non-numeric cell {cell!r}", line=lineno, path=str(path)) from None
            if v <= -1.0:
                raise IngestError(f"return {cell} <= -1", line=lineno, path=str(path))
            values.append(v)
        rows.append(values)

    return ReturnSeries(
        labels=names,
        rows=np.array(rows),
        dt=dt,
        source=str(path),
        row_labels=row_labels if has_label else None,
        label_header=header[0] if has_label else None,
    )


def write_csv(series: ReturnSeries, path) -> None:
    """Write returns with 17 significant digits so a reload is bit-exact."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        header = list(series.labels)
        if series.row_labels is not None:
            header = [series.label_header or "date"] + header
        writer.writerow(header)
        for i, row in enumerate(series.rows.tolist()):
            cells = [format(v, ".17g") for v in row]
            if series.row_labels is not None:
                cells = [series.row_labels[i]] + cells
            writer.writerow(cells)


def path_series(returns: np.ndarray, dt: float, labels: Sequence[str] | None = None) -> ReturnSeries:
    """Wrap a simulated path with a ``round`` label column."""
    returns = np.asarray(returns, dtype=float)
    if labels is None:
        labels = ["index"] + [f"sec{k}" for k in range(1, returns.shape[1])]
    return ReturnSeries(
        labels=list(labels),
        rows=returns,
        dt=dt,
        source="simulated",
        row_labels=[str(n) for n in range(1, returns.shape[0] + 1)],
        label_header="round",
    )


def as_market(series: ReturnSeries) -> DeterministicMarket:
    """Market replaying the series rows in order."""
    return DeterministicMarket(series.rows)
