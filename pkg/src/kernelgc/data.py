"""Time-series containers, CSV ingestion and lag embedding.

Every method in the package consumes an :class:`EmbeddedDesign`: the lagged
covariate matrices ``X`` (driver removed) and ``Z`` (all series) together with
the target vector ``y``.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Literal, Sequence

import numpy as np

logger = logging.getLogger(__name__)

Preprocessing = Literal["none", "kgc"]


class DataError(ValueError):
    """Raised for malformed input series or invalid embedding requests."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class TimeSeriesSystem:
    """Equal-length scalar series; rows are time steps, columns are series."""

    names: tuple[str, ...]
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        if values.ndim != 2:
            raise DataError("values must be a 2-D array (time x series)")
        names = tuple(str(n) for n in self.names)
        if len(names) != values.shape[1]:
            raise DataError(
                f"{len(names)} names given for {values.shape[1]} series"
            )
        if len(set(names)) != len(names):
            raise DataError("series names must be unique")
        if values.shape[0] < 2:
            raise DataError("each series needs at least 2 observations")
        if not np.all(np.isfinite(values)):
            row, col = np.argwhere(~np.isfinite(values))[0]
            raise DataError(f"non-finite value at row {row}, series {names[col]!r}")
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "values", _frozen(values))

    @classmethod
    def from_array(cls, values, names: Sequence[str] | None = None) -> "TimeSeriesSystem":
        values = np.asarray(values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        if names is None:
            names = [f"x{i + 1}" for i in range(values.shape[1])]
        return cls(tuple(names), values)

    @property
    def n_series(self) -> int:
        return self.values.shape[1]

    @property
    def length(self) -> int:
        return self.values.shape[0]

    def index(self, name_or_index: str | int) -> int:
        if isinstance(name_or_index, (int, np.integer)):
            i = int(name_or_index)
            if not 0 <= i < self.n_series:
                raise DataError(f"series index {i} out of range")
            return i
        try:
            return self.names.index(name_or_index)
        except ValueError:
            raise DataError(f"unknown series {name_or_index!r}") from None

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(self.names)
            for row in self.values:
                writer.writerow([repr(float(v)) for v in row])


def load_csv(path: str | Path, has_header: bool = True) -> TimeSeriesSystem:
    """Read a comma-separated file with one column per series.

    Parameters
    ----------
    path : str or Path
        UTF-8 CSV file, one row per time step.
    has_header : bool
        If True the first row supplies series names, otherwise the series are
        named ``x1 .. x{n_t}``.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"no such file: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    names = None
    if has_header and rows:
        names = [c.strip() for c in rows[0]]
        rows = rows[1:]
    if not rows:
        raise DataError("no data rows")
    width = len(names) if names is not None else len(rows[0])
    first_line = 2 if has_header else 1
    data = np.empty((len(rows), width))
    for i, row in enumerate(rows):
        if len(row) != width:
            raise DataError(
                f"ragged row at line {i + first_line}: expected {width} columns, got {len(row)}"
            )
        for j, cell in enumerate(row):
            try:
                v = float(cell)
            except ValueError:
                raise DataError(
                    f"cannot parse {cell!r} at line {i + first_line}, column {j + 1}"
                ) from None
            if not math.isfinite(v):
                raise DataError(
                    f"non-finite value {cell!r} at line {i + first_line}, column {j + 1}"
                )
            data[i, j] = v
    return TimeSeriesSystem.from_array(data, names)


def standardize(system: TimeSeriesSystem) -> TimeSeriesSystem:
    """Zero mean, unit sample standard deviation (ddof=1) for every series."""
    v = system.values
    sd = v.std(axis=0, ddof=1)
    for name, s in zip(system.names, sd):
        if not s > 0:
            raise DataError(f"zero variance series {name}")
    return TimeSeriesSystem(system.names, (v - v.mean(axis=0)) / sd)


@dataclass(frozen=True)
class EmbeddedDesign:
    """Lag-embedded regression design for one target (and optionally one driver).

    ``column_map[j] = (series, lag)`` gives the provenance of column ``j`` of
    ``Z``; lag 0 marks a contemporaneous column.  ``X`` is ``Z`` without the
    driver's columns and is ``None`` when no driver was requested.
    """

    Z: np.ndarray
    y: np.ndarray
    column_map: tuple[tuple[int, int], ...]
    target_index: int
    lag_order: int
    driver_index: int | None = None
    X: np.ndarray | None = None

    @property
    def n(self) -> int:
        return self.Z.shape[0]

    @property
    def driver_columns(self) -> np.ndarray:
        return np.array(
            [j for j, (s, _) in enumerate(self.column_map) if s == self.driver_index],
            dtype=int,
        )

    @property
    def X_driver(self) -> np.ndarray:
        """The driver's own lag block (``X_a``)."""
        return self.Z[:, self.driver_columns]

    def subset(self, columns: Sequence[int]) -> "EmbeddedDesign":
        cols = list(columns)
        return EmbeddedDesign(
            Z=_frozen(self.Z[:, cols]),
            y=self.y,
            column_map=tuple(self.column_map[j] for j in cols),
            target_index=self.target_index,
            lag_order=self.lag_order,
        )


def _lag_block(values: np.ndarray, series: int, m: int) -> tuple[np.ndarray, list]:
    # row i holds xi_{c,i}, ..., xi_{c,i+m-1}: oldest lag first
    n = values.shape[0] - m
    cols = [values[j : j + n, series] for j in range(m)]
    return np.column_stack(cols), [(series, m - j) for j in range(m)]


def _check_lag(system: TimeSeriesSystem, m: int) -> None:
    if int(m) != m or m < 1:
        raise DataError(f"lag order must be a positive integer, got {m}")
    if m >= system.length:
        raise DataError(f"lag order {m} must be smaller than the series length {system.length}")


def _kgc_preprocess(Z: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    Z = Z - Z.mean(axis=0)
    y = y - y.mean()
    norm = np.linalg.norm(y)
    if norm == 0:
        raise DataError("target is constant over the embedding window")
    return Z, y / norm


def _build(system, target, m, order, preprocessing, driver=None, contemporaneous=False):
    blocks, cmap = [], []
    n = system.length - m
    for s in order:
        block, cols = _lag_block(system.values, s, m)
        blocks.append(block)
        cmap.extend(cols)
        if contemporaneous and s != target:
            blocks.append(system.values[m:, s][:, None])
            cmap.append((s, 0))
    Z = np.column_stack(blocks) if blocks else np.empty((n, 0))
    y = system.values[m:, target].copy()
    if preprocessing == "kgc":
        Z, y = _kgc_preprocess(Z, y)
    elif preprocessing != "none":
        raise DataError(f"unknown preprocessing {preprocessing!r}")
    X = None
    if driver is not None:
        keep = [j for j, (s, _) in enumerate(cmap) if s != driver]
        X = _frozen(Z[:, keep])
    return EmbeddedDesign(
        Z=_frozen(Z),
        y=_frozen(y),
        column_map=tuple(cmap),
        target_index=target,
        lag_order=m,
        driver_index=driver,
        X=X,
    )


def embed(
    system: TimeSeriesSystem,
    target: int | str,
    driver: int | str,
    m: int,
    preprocessing: Preprocessing = "none",
) -> EmbeddedDesign:
    """Restricted/unrestricted design for testing ``driver -> target``.

    ``Z`` is ordered driver block, target block, then the remaining series in
    system order; within a block the oldest lag comes first.  With
    ``preprocessing="kgc"`` every column and ``y`` are mean-centred and ``y``
    is scaled to unit norm.
    """
    _check_lag(system, m)
    b, a = system.index(target), system.index(driver)
    if a == b:
        raise DataError("target and driver must differ")
    order = [a, b] + [s for s in range(system.n_series) if s not in (a, b)]
    return _build(system, b, m, order, preprocessing, driver=a)


def embed_full(
    system: TimeSeriesSystem, target: int | str, m: int, preprocessing: Preprocessing = "none"
) -> EmbeddedDesign:
    """All series lagged, in system order, without singling out a driver."""
    _check_lag(system, m)
    b = system.index(target)
    return _build(system, b, m, range(system.n_series), preprocessing)


def embed_contemporaneous(
    system: TimeSeriesSystem, target: int | str, m: int, preprocessing: Preprocessing = "none"
) -> EmbeddedDesign:
    """Lagged blocks for all series plus lag-0 columns of every non-target series.

    Each series contributes its ``m`` lags followed by its current value; the
    target's current value is the response and is left out of ``Z``.
    """
    _check_lag(system, m)
    b = system.index(target)
    return _build(system, b, m, range(system.n_series), preprocessing, contemporaneous=True)


def check_sample_size(n: int, n_series: int, m: int, method: str, strict: bool = False) -> None:
    """Reject (``strict``) or warn when there are no more rows than lagged features."""
    if n > n_series * m:
        return
    msg = f"{method}: n={n} rows but n_t*m={n_series * m} lagged features"
    if strict:
        raise DataError(msg)
    logger.warning(msg)
