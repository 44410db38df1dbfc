"""CSV sensor datasets as centered block streams."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .linalg import InvalidArgumentError

ROWS_ARE_SENSORS = "rows-are-sensors"
ROWS_ARE_TIMESTEPS = "rows-are-timesteps"


class ParseError(ValueError):
    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        where = ""
        if line is not None:
            where = f"line {line}" + (f", column {column}" if column is not None else "")
            where += ": "
        super().__init__(where + message)
        self.line = line
        self.column = column


@dataclass(frozen=True)
class Dataset:
    name: str
    data: np.ndarray  # n x T, sensors by timesteps
    row_means: np.ndarray

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def t_total(self) -> int:
        return self.data.shape[1]

    def recentered(self) -> Dataset:
        means = self.data.mean(axis=1)
        return Dataset(self.name, self.data - means[:, None], self.row_means + means)


def _read_table(path: Path, delimiter: str, has_header: bool) -> np.ndarray:
    rows = []
    width = None
    with open(path, newline="") as fh:
        reader = csv.reader(fh, delimiter=delimiter)
        for lineno, row in enumerate(reader, start=1):
            if has_header and lineno == 1:
                continue
            if not row or all(not cell.strip() for cell in row):
                continue
            if width is None:
                width = len(row)
            elif len(row) != width:
                raise ParseError(f"expected {width} fields, found {len(row)}", lineno)
            values = []
            for col, cell in enumerate(row, start=1):
                try:
                    # float() is locale-independent and accepts 1e-3 style input.
                    values.append(float(cell))
                except ValueError:
                    raise ParseError(f"non-numeric cell {cell!r}", lineno, col) from None
            rows.append(values)
    if not rows:
        raise InvalidArgumentError(f"{path}: no data rows")
    table = np.array(rows, dtype=np.float64)
    if not np.all(np.isfinite(table)):
        bad = np.argwhere(~np.isfinite(table))[0]
        raise ParseError("non-finite value", int(bad[0]) + 1 + int(has_header), int(bad[1]) + 1)
    return table


def load_csv(path, delimiter: str = ",", has_header: bool = False,
             orientation: str = ROWS_ARE_SENSORS, center: bool = True) -> Dataset:
    """Read a numeric table and orient it as sensors x timesteps.

    With ``center`` (the default) each sensor's mean is subtracted and kept in
    ``row_means``; otherwise ``row_means`` is zero.
    """
    path = Path(path)
    if orientation not in (ROWS_ARE_SENSORS, ROWS_ARE_TIMESTEPS):
        raise InvalidArgumentError(f"unknown orientation {orientation!r}")
    table = _read_table(path, delimiter, has_header)
    data = table if orientation == ROWS_ARE_SENSORS else table.T.copy()
    ds = Dataset(path.stem, data, np.zeros(data.shape[0]))
    return ds.recentered() if center else ds


def write_csv(ds: Dataset, path, delimiter: str = ",", restore_means: bool = True) -> None:
    """Write sensors as rows; ``repr`` floats so a reload is exact."""
    data = ds.data + ds.row_means[:, None] if restore_means else ds.data
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, delimiter=delimiter, lineterminator="\n")
        for row in data:
            writer.writerow([repr(float(v)) for v in row])


def as_blocks(ds: Dataset | np.ndarray, b: int) -> list[np.ndarray]:
    """Consecutive ``n x b`` column blocks; a trailing partial block is dropped."""
    if b < 1:
        raise InvalidArgumentError(f"block size must be >= 1, got {b}")
    data = ds.data if isinstance(ds, Dataset) else np.asarray(ds)
    k = data.shape[1] // b
    return [data[:, i * b:(i + 1) * b] for i in range(k)]


def dropped_columns(t_total: int, b: int) -> int:
    return t_total % b
