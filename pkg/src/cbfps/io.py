"""CSV input/output and schema validation.

All interchange files are plain CSV; see docs/formats.md for the schemas.
Floats are written with repr so identical arrays always serialize to
identical bytes.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import DataError
from .fdata import FunctionalSample, Grid

__all__ = [
    "SchemaViolation",
    "SchemaReport",
    "read_curves",
    "write_curves",
    "read_table",
    "write_table",
    "read_weights",
    "write_weights",
    "validate_inputs",
]


def _fmt(value) -> str:
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_table(path, header, rows) -> None:
    """Write a CSV with deterministic float formatting."""
    path = Path(path)
    with path.open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def read_table(path) -> tuple[list[str], np.ndarray]:
    """Read a headered numeric CSV into (column names, value matrix)."""
    path = Path(path)
    with path.open(newline="") as handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: file is empty")
        rows = []
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DataError(
                    f"{path}: row {line_no} has {len(row)} fields, expected {len(header)}"
                )
            try:
                rows.append([float(v) for v in row])
            except ValueError as exc:
                raise DataError(f"{path}: row {line_no}: {exc}") from exc
    if not rows:
        raise DataError(f"{path}: no data rows")
    return header, np.asarray(rows, dtype=float)


def read_curves(path) -> FunctionalSample:
    """Read the curves CSV: first row grid points, then one curve per row."""
    path = Path(path)
    with path.open(newline="") as handle:
        reader = csv.reader(handle)
        raw = [row for row in reader if row]
    if len(raw) < 2:
        raise DataError(f"{path}: need a grid row and at least one curve row")
    try:
        grid_points = np.asarray([float(v) for v in raw[0]], dtype=float)
    except ValueError as exc:
        raise DataError(f"{path}: grid row: {exc}") from exc
    values = []
    for line_no, row in enumerate(raw[1:], start=2):
        if len(row) != grid_points.size:
            raise DataError(
                f"{path}: row {line_no} has {len(row)} values, "
                f"expected {grid_points.size}"
            )
        try:
            values.append([float(v) for v in row])
        except ValueError as exc:
            raise DataError(f"{path}: row {line_no}: {exc}") from exc
    try:
        grid = Grid(grid_points)
        return FunctionalSample(grid, np.asarray(values, dtype=float))
    except DataError as exc:
        raise DataError(f"{path}: {exc}") from exc


def write_curves(path, sample: FunctionalSample) -> None:
    path = Path(path)
    with path.open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow([_fmt(v) for v in sample.grid.points])
        for row in sample.values:
            writer.writerow([_fmt(v) for v in row])


def read_weights(path) -> np.ndarray:
    header, values = read_table(path)
    if "weight" not in header:
        raise DataError(f"{path}: missing 'weight' column")
    return values[:, header.index("weight")]


def write_weights(path, weights: np.ndarray) -> None:
    write_table(path, ["weight"], [[w] for w in weights])


@dataclass(frozen=True)
class SchemaViolation:
    """One localized schema problem (1-based file coordinates)."""

    file: str
    row: int
    column: int
    message: str


@dataclass
class SchemaReport:
    violations: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def add(self, file, row, column, message):
        self.violations.append(SchemaViolation(str(file), row, column, message))


def validate_inputs(
    curves_path=None,
    data_path=None,
    outcome_col: str = "y",
    group_col: str = None,
) -> SchemaReport:
    """Validate input files without loading them into domain objects.

    Checks grid monotonicity, row-length agreement, finiteness and required
    columns; every violation is reported with its file, row and column.
    """
    report = SchemaReport()
    if curves_path is not None:
        _validate_curves(curves_path, report)
    if data_path is not None:
        _validate_data(data_path, outcome_col, group_col, report)
    return report


def _read_raw(path):
    with Path(path).open(newline="") as handle:
        return [row for row in csv.reader(handle)]


def _validate_curves(path, report: SchemaReport) -> None:
    try:
        raw = [row for row in _read_raw(path) if row]
    except OSError as exc:
        report.add(path, 0, 0, f"cannot read: {exc}")
        return
    if len(raw) < 2:
        report.add(path, 1, 1, "need a grid row plus at least one curve row")
        return
    grid_len = len(raw[0])
    grid_vals = []
    for col, cell in enumerate(raw[0], start=1):
        try:
            value = float(cell)
        except ValueError:
            report.add(path, 1, col, f"grid value {cell!r} is not numeric")
            continue
        if not math.isfinite(value):
            report.add(path, 1, col, "grid value is not finite")
            continue
        grid_vals.append(value)
    if len(grid_vals) == grid_len:
        for col in range(1, grid_len):
            if grid_vals[col] <= grid_vals[col - 1]:
                report.add(path, 1, col + 1, "grid points must be strictly increasing")
    for line_no, row in enumerate(raw[1:], start=2):
        if len(row) != grid_len:
            report.add(
                path, line_no, len(row),
                f"row length {len(row)} does not match grid length {grid_len}",
            )
            continue
        for col, cell in enumerate(row, start=1):
            try:
                value = float(cell)
            except ValueError:
                report.add(path, line_no, col, f"value {cell!r} is not numeric")
                continue
            if not math.isfinite(value):
                report.add(path, line_no, col, "value is not finite")


def _validate_data(path, outcome_col, group_col, report: SchemaReport) -> None:
    try:
        raw = _read_raw(path)
    except OSError as exc:
        report.add(path, 0, 0, f"cannot read: {exc}")
        return
    raw = [row for row in raw if row]
    if not raw:
        report.add(path, 1, 1, "file is empty")
        return
    header = raw[0]
    if outcome_col not in header:
        report.add(path, 1, 1, f"missing outcome column {outcome_col!r}")
    if group_col is not None and group_col not in header:
        report.add(path, 1, 1, f"missing group column {group_col!r}")
    if len(raw) < 2:
        report.add(path, 1, 1, "no data rows")
    for line_no, row in enumerate(raw[1:], start=2):
        if len(row) != len(header):
            report.add(
                path, line_no, len(row),
                f"row length {len(row)} does not match header length {len(header)}",
            )
            continue
        for col, cell in enumerate(row, start=1):
            try:
                value = float(cell)
            except ValueError:
                report.add(path, line_no, col, f"value {cell!r} is not numeric")
                continue
            if not math.isfinite(value):
                report.add(path, line_no, col, "value is not finite")
    if group_col is not None and group_col in header:
        g_idx = header.index(group_col)
        for line_no, row in enumerate(raw[1:], start=2):
            if len(row) == len(header):
                try:
                    value = float(row[g_idx])
                except ValueError:
                    continue
                if value not in (0.0, 1.0):
                    report.add(path, line_no, g_idx + 1, "group values must be 0 or 1")


def load_dataset(path, outcome_col: str = "y", group_col: str = None):
    """Split a data CSV into outcome, covariate matrix, optional group.

    Returns (outcome, covariates, covariate_names, group) where group is None
    when no group column was requested.
    """
    header, values = read_table(path)
    if outcome_col not in header:
        raise DataError(f"{path}: missing outcome column {outcome_col!r}")
    y = values[:, header.index(outcome_col)]
    group = None
    drop = {outcome_col}
    if group_col is not None:
        if group_col not in header:
            raise DataError(f"{path}: missing group column {group_col!r}")
        group = values[:, header.index(group_col)]
        drop.add(group_col)
    keep = [j for j, name in enumerate(header) if name not in drop]
    if not keep:
        raise DataError(f"{path}: no covariate columns")
    return y, values[:, keep], [header[j] for j in keep], group
