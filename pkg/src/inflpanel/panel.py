"""Panel data model, long-format CSV ingestion, and per-unit transforms.

A :class:`PanelDataset` wraps a pandas frame indexed by ``(unit, year)``.
Missing cells are ``NaN``; a derived series is missing wherever any input
it needs is missing or the required prior year is absent for that unit.
"""

from __future__ import annotations

import csv
import math
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
import pandas as pd

INDEX_NAMES = ("unit", "year")
DEFAULT_WINDOW = (2013, 2024)

_DECIMAL = re.compile(r"^[+-]?(\d+(\.\d*)?|\.\d+)([eE][+-]?\d+)?$")
_INTEGER = re.compile(r"^[+-]?\d+$")


class PanelError(ValueError):
    """Raised for malformed panels, unknown columns or index mismatches."""


class CsvFormatError(PanelError):
    def __init__(self, path, line: int, message: str):
        super().__init__(f"{path}:{line}: {message}")
        self.path = path
        self.line = line


class PanelDataset:
    """Immutable country-by-year panel in long form.

    Parameters
    ----------
    frame : pandas.DataFrame
        Either indexed by ``(unit, year)`` or carrying ``unit`` and ``year``
        columns. Remaining columns are coerced to float.
    """

    def __init__(self, frame: pd.DataFrame):
        if not isinstance(frame.index, pd.MultiIndex) or list(frame.index.names) != list(INDEX_NAMES):
            missing = [c for c in INDEX_NAMES if c not in frame.columns]
            if missing:
                raise PanelError(f"frame lacks key columns {missing}")
            frame = frame.set_index(list(INDEX_NAMES))
        units = frame.index.get_level_values("unit").astype(str)
        years = frame.index.get_level_values("year").astype(np.int64)
        frame = frame.copy()
        frame.index = pd.MultiIndex.from_arrays([units, years], names=INDEX_NAMES)
        if frame.index.has_duplicates:
            dup = frame.index[frame.index.duplicated()][0]
            raise PanelError(f"duplicate (unit, year) pair {dup}")
        frame = frame.sort_index().astype(float)
        frame.columns = [str(c) for c in frame.columns]
        self._frame = frame

    @property
    def frame(self) -> pd.DataFrame:
        return self._frame.copy()

    @property
    def index(self) -> pd.MultiIndex:
        return self._frame.index

    @property
    def columns(self) -> list[str]:
        return list(self._frame.columns)

    @property
    def units(self) -> list[str]:
        return list(self._frame.index.get_level_values("unit").unique())

    @property
    def periods(self) -> list[int]:
        return sorted(int(y) for y in self._frame.index.get_level_values("year").unique())

    def __len__(self) -> int:
        return len(self._frame)

    def __contains__(self, column: str) -> bool:
        return column in self._frame.columns

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, PanelDataset):
            return NotImplemented
        return self._frame.equals(other._frame)

    def __repr__(self) -> str:
        return (f"PanelDataset(units={len(self.units)}, periods={len(self.periods)}, "
                f"rows={len(self)}, columns={self.columns})")

    def series(self, column: str) -> pd.Series:
        self._require(column)
        return self._frame[column].copy()

    def _require(self, *columns: str) -> None:
        for column in columns:
            if column not in self._frame.columns:
                raise PanelError(f"unknown column {column!r}")

    def with_columns(self, **columns: pd.Series) -> "PanelDataset":
        """Return a new dataset with the given series added or replaced."""
        frame = self._frame.copy()
        for name, values in columns.items():
            values = _as_series(values, name)
            if not values.index.equals(frame.index):
                values = values.reindex(frame.index)
            frame[name] = values.to_numpy(dtype=float)
        return PanelDataset(frame)

    def with_unit_values(self, values: Mapping[str, Mapping[str, float]]) -> "PanelDataset":
        """Broadcast time-invariant per-unit values as columns.

        ``values`` maps column name to a ``{unit: value}`` mapping; units
        absent from the mapping get missing cells.
        """
        units = self._frame.index.get_level_values("unit")
        new = {}
        for name, per_unit in values.items():
            lookup = pd.Series(per_unit, dtype=float)
            new[name] = pd.Series(lookup.reindex(units).to_numpy(), index=self._frame.index)
        return self.with_columns(**new)

    def window(self, start: int | None = None, end: int | None = None) -> "PanelDataset":
        years = self._frame.index.get_level_values("year")
        keep = np.ones(len(years), dtype=bool)
        if start is not None:
            keep &= years >= start
        if end is not None:
            keep &= years <= end
        return PanelDataset(self._frame[keep])

    def select_units(self, units: Iterable[str]) -> "PanelDataset":
        wanted = set(units)
        mask = self._frame.index.get_level_values("unit").isin(wanted)
        return PanelDataset(self._frame[mask])


def _as_series(values, name: str) -> pd.Series:
    if isinstance(values, pd.Series):
        return values.rename(name)
    raise PanelError(f"column {name!r} must be a pandas Series indexed by (unit, year)")


# --------------------------------------------------------------------------
# CSV ingestion
# --------------------------------------------------------------------------

def parse_decimal(text: str) -> float:
    text = text.strip()
    if text == "":
        return math.nan
    if not _DECIMAL.match(text):
        raise ValueError(f"not a decimal literal: {text!r}")
    return float(text)


def format_decimal(value: float) -> str:
    """Shortest positional decimal that round-trips; empty for missing."""
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return ""
    value = float(value)
    if math.isnan(value):
        return ""
    if math.isinf(value):
        raise PanelError("cannot serialise an infinite value")
    return np.format_float_positional(value, unique=True, trim="-")


def read_panel_csv(path, *, start: int | None = None, end: int | None = None) -> PanelDataset:
    """Load ``unit,year,<var>...`` long-format CSV.

    Errors carry the offending line number. Rows are sorted on load.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise CsvFormatError(path, 1, "empty file") from None
        header = [h.strip() for h in header]
        if header[:2] != ["unit", "year"]:
            raise CsvFormatError(path, 1, "header must start with 'unit,year'")
        variables = header[2:]
        if len(set(variables)) != len(variables) or any(v == "" for v in variables):
            raise CsvFormatError(path, 1, "variable names must be unique and non-empty")
        units, years, rows = [], [], []
        seen: dict[tuple[str, int], int] = {}
        for row in reader:
            line = reader.line_num
            if not row or all(c.strip() == "" for c in row):
                continue
            if len(row) != len(header):
                raise CsvFormatError(path, line, f"expected {len(header)} fields, found {len(row)}")
            unit = row[0].strip()
            if unit == "":
                raise CsvFormatError(path, line, "empty unit identifier")
            if not _INTEGER.match(row[1].strip()):
                raise CsvFormatError(path, line, f"year {row[1]!r} is not a base-10 integer")
            year = int(row[1])
            key = (unit, year)
            if key in seen:
                raise CsvFormatError(path, line, f"duplicate (unit, year) {key}; first seen on line {seen[key]}")
            seen[key] = line
            try:
                values = [parse_decimal(c) for c in row[2:]]
            except ValueError as exc:
                raise CsvFormatError(path, line, str(exc)) from None
            units.append(unit)
            years.append(year)
            rows.append(values)
    index = pd.MultiIndex.from_arrays([units, np.asarray(years, dtype=np.int64)], names=INDEX_NAMES)
    frame = pd.DataFrame(np.asarray(rows, dtype=float).reshape(len(rows), len(variables)),
                         index=index, columns=variables)
    data = PanelDataset(frame)
    if start is not None or end is not None:
        data = data.window(start, end)
    return data


def write_panel_csv(data: PanelDataset, path) -> None:
    path = Path(path)
    frame = data.frame
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["unit", "year", *frame.columns])
        for (unit, year), values in zip(frame.index, frame.to_numpy()):
            writer.writerow([unit, int(year), *(format_decimal(v) for v in values)])


# --------------------------------------------------------------------------
# Transforms
# --------------------------------------------------------------------------

def shift(series: pd.Series, k: int) -> pd.Series:
    """Value at ``(i, t)`` is the input at ``(i, t - k)``; missing if that year is absent."""
    units = series.index.get_level_values("unit")
    years = series.index.get_level_values("year")
    source = pd.MultiIndex.from_arrays([units, years - k], names=INDEX_NAMES)
    values = series.reindex(source).to_numpy(dtype=float)
    return pd.Series(values, index=series.index, name=series.name)


def lag(data: PanelDataset, column: str, k: int = 1) -> pd.Series:
    if int(k) != k or k < 1:
        raise PanelError(f"lag order must be a positive integer, got {k!r}")
    out = shift(data.series(column), int(k))
    return out.rename(f"L{k}.{column}" if k > 1 else f"L.{column}")


def first_difference(data: PanelDataset, column: str) -> pd.Series:
    x = data.series(column)
    return (x - shift(x, 1)).rename(f"D.{column}")


def interact(a: pd.Series, b) -> pd.Series:
    """Cellwise product of ``a`` with a series or a per-unit constant.

    ``b`` may be a series on the same index, or a mapping / unit-indexed
    series that is broadcast over years.
    """
    if isinstance(b, pd.Series) and isinstance(b.index, pd.MultiIndex):
        if not b.index.equals(a.index):
            raise PanelError("interact: index sets differ")
        other = b.to_numpy(dtype=float)
    else:
        lookup = pd.Series(b, dtype=float) if not isinstance(b, pd.Series) else b.astype(float)
        units = a.index.get_level_values("unit")
        missing = set(units.unique()) - set(lookup.index)
        if missing:
            raise PanelError(f"interact: no per-unit value for {sorted(missing)}")
        other = lookup.reindex(units).to_numpy(dtype=float)
    name = f"{a.name}:{getattr(b, 'name', None) or 'b'}"
    return pd.Series(a.to_numpy(dtype=float) * other, index=a.index, name=name)


# --------------------------------------------------------------------------
# Descriptives
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class DescriptiveRow:
    variable: str
    obs: int
    mean: float
    sd: float
    min: float
    max: float

    @property
    def sd_defined(self) -> bool:
        return self.obs >= 2


def _sample_sd(values: np.ndarray) -> float:
    return float(np.std(values, ddof=1)) if len(values) >= 2 else math.nan


def describe(data: PanelDataset, columns: Sequence[str]) -> list[DescriptiveRow]:
    """Obs, mean, sd (n-1), min and max over non-missing cells of each column."""
    data._require(*columns)
    rows = []
    for column in columns:
        values = data.series(column).dropna().to_numpy()
        # sorting makes the float sums independent of input row order
        values = np.sort(values)
        if len(values) == 0:
            rows.append(DescriptiveRow(column, 0, math.nan, math.nan, math.nan, math.nan))
            continue
        rows.append(DescriptiveRow(column, len(values), float(np.mean(values)), _sample_sd(values),
                                   float(values[0]), float(values[-1])))
    return rows


@dataclass(frozen=True)
class VolatilityProfile:
    values: pd.Series
    omitted: list[str]


def volatility_profile(data: PanelDataset, column: str) -> VolatilityProfile:
    """Per-unit standard deviation of year-on-year changes.

    Units with fewer than two observed changes cannot carry an n-1 standard
    deviation; they are left out and listed in ``omitted``.
    """
    changes = first_difference(data, column).dropna()
    out, omitted = {}, []
    grouped = {u: g.to_numpy() for u, g in changes.groupby(level="unit")}
    for unit in data.units:
        d = grouped.get(unit, np.empty(0))
        if len(d) < 2:
            omitted.append(unit)
        else:
            out[unit] = float(np.std(d, ddof=1))
    return VolatilityProfile(pd.Series(out, dtype=float, name=column), omitted)


def histogram(data: PanelDataset, column: str, bin_width: float) -> list[tuple[float, int]]:
    """Counts over half-open bins ``[k*w, (k+1)*w)`` spanning the observed range."""
    if not bin_width > 0:
        raise PanelError("bin_width must be positive")
    values = data.series(column).dropna().to_numpy()
    if len(values) == 0:
        raise PanelError(f"column {column!r} has no observations")
    k = np.floor(values / bin_width).astype(np.int64)
    lo, hi = int(k.min()), int(k.max())
    counts = np.bincount(k - lo, minlength=hi - lo + 1)
    return [((lo + j) * bin_width, int(c)) for j, c in enumerate(counts)]


def scatter_pairs(data: PanelDataset, x: str, y: str) -> list[tuple[str, int, float, float]]:
    data._require(x, y)
    frame = data.frame[[x, y]].dropna()
    return [(u, int(t), float(a), float(b)) for (u, t), (a, b) in zip(frame.index, frame.to_numpy())]
