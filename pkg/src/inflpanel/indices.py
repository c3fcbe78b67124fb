"""Institutional rigidity indices and exchange-rate regime coding.

WRI sums three wage-setting dimensions scored 0-2 (total 0-6); LPRI sums
four collective-labour-regulation dimensions scored 0-2.5 (total 0-10).
Regime codes run 1 = fix, 2 = intermediate, 3 = free float and are inverted
so that higher values mean a more rigid regime.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .panel import CsvFormatError, format_decimal, parse_decimal

WRI_DIMENSION_MAX = 2.0
LPRI_DIMENSION_MAX = 2.5
WRI_DOMAIN = (0.0, 6.0)
LPRI_DOMAIN = (0.0, 10.0)
REGIME_CODES = (1, 2, 3)
REGIME_NAMES = {1: "Fix", 2: "Intermediate", 3: "Free float"}
DEFAULT_ASSIGNED_PROBABILITY = 0.8
DEFAULT_OTHER_PROBABILITY = 0.1
CONSISTENCY_TOL = 1e-9


class IndexScoreError(ValueError):
    """Out-of-range scores, bad regime codes or inconsistent index files."""


def _check_dimensions(values, upper: float, label: str) -> None:
    for k, v in enumerate(values, start=1):
        if not (0.0 <= v <= upper):
            raise IndexScoreError(f"{label}_D{k} = {v!r} outside [0, {upper:g}]")


@dataclass(frozen=True)
class WriScores:
    d1: float
    d2: float
    d3: float

    def __post_init__(self):
        _check_dimensions((self.d1, self.d2, self.d3), WRI_DIMENSION_MAX, "WRI")


@dataclass(frozen=True)
class LpriScores:
    d1: float
    d2: float
    d3: float
    d4: float

    def __post_init__(self):
        _check_dimensions((self.d1, self.d2, self.d3, self.d4), LPRI_DIMENSION_MAX, "LPRI")


@dataclass(frozen=True)
class IndexWithBand:
    point: float
    band: float
    domain_min: float
    domain_max: float

    def __post_init__(self):
        if not self.band >= 0:
            raise IndexScoreError(f"band must be nonnegative, got {self.band!r}")
        if not (self.domain_min <= self.point <= self.domain_max):
            raise IndexScoreError(f"point {self.point!r} outside [{self.domain_min}, {self.domain_max}]")


@dataclass(frozen=True)
class RegimeAssignment:
    code: int
    probabilities: tuple[float, float, float] = field(default=None)

    def __post_init__(self):
        if self.code not in REGIME_CODES:
            raise IndexScoreError(f"unknown regime code {self.code!r}")
        if self.probabilities is None:
            object.__setattr__(self, "probabilities", default_regime_probabilities(self.code))
        p = tuple(float(x) for x in self.probabilities)
        object.__setattr__(self, "probabilities", p)
        if len(p) != 3 or any(x < 0 for x in p):
            raise IndexScoreError(f"regime probabilities must be three nonnegative numbers, got {p}")
        if abs(math.fsum(p) - 1.0) > 1e-12:
            raise IndexScoreError(f"regime probabilities sum to {math.fsum(p)!r}, not 1")
        if p[self.code - 1] < max(p):
            raise IndexScoreError(f"code {self.code} is not the modal category of {p}")


def default_regime_probabilities(code: int) -> tuple[float, float, float]:
    return tuple(DEFAULT_ASSIGNED_PROBABILITY if c == code else DEFAULT_OTHER_PROBABILITY
                 for c in REGIME_CODES)


def compute_wri(scores: WriScores) -> float:
    return scores.d1 + scores.d2 + scores.d3


def compute_lpri(scores: LpriScores) -> float:
    return scores.d1 + scores.d2 + scores.d3 + scores.d4


def regime_rigidity(code) -> float:
    """Fix -> 3, Intermediate -> 2, Free float -> 1."""
    if isinstance(code, float) and code.is_integer():
        code = int(code)
    if code not in REGIME_CODES:
        raise IndexScoreError(f"unknown regime code {code!r}")
    return float(4 - code)


# --------------------------------------------------------------------------
# Institutions file
# --------------------------------------------------------------------------

@dataclass
class InstitutionRecord:
    unit: str
    wri: float = math.nan
    wri_band: float = 0.0
    lpri: float = math.nan
    lpri_band: float = 0.0
    regime: RegimeAssignment | None = None

    @property
    def err(self) -> float:
        return math.nan if self.regime is None else regime_rigidity(self.regime.code)

    def wri_with_band(self) -> IndexWithBand:
        return IndexWithBand(self.wri, self.wri_band, *WRI_DOMAIN)

    def lpri_with_band(self) -> IndexWithBand:
        return IndexWithBand(self.lpri, self.lpri_band, *LPRI_DOMAIN)


WRI_DIMS = ("wri_d1", "wri_d2", "wri_d3")
LPRI_DIMS = ("lpri_d1", "lpri_d2", "lpri_d3", "lpri_d4")
PROB_COLUMNS = ("p_fix", "p_intermediate", "p_float")
OUTPUT_COLUMNS = ("unit", "wri", "wri_band", "lpri", "lpri_band", "err_code", "err", *PROB_COLUMNS)


def _total(row: dict, dims, total_key: str, scores_cls, compute, path, line) -> float:
    dim_values = [row.get(d) for d in dims]
    have_dims = all(v is not None and not math.isnan(v) for v in dim_values)
    total = row.get(total_key, math.nan)
    if have_dims:
        try:
            computed = compute(scores_cls(*dim_values))
        except IndexScoreError as exc:
            raise CsvFormatError(path, line, str(exc)) from None
        if total is not None and not math.isnan(total) and abs(total - computed) > CONSISTENCY_TOL:
            raise CsvFormatError(path, line, f"{total_key}={total!r} disagrees with dimension sum {computed!r}")
        return computed
    if any(v is not None and not math.isnan(v) for v in dim_values):
        raise CsvFormatError(path, line, f"incomplete {total_key} dimensions")
    return math.nan if total is None else total


def read_institutions(path) -> dict[str, InstitutionRecord]:
    """Parse an institutions CSV holding totals and/or dimension scores.

    Missing index values stay missing; a missing band is read as 0. When only
    ``err_code`` is given the regime probabilities default to 0.8 on the
    assigned category and 0.1 elsewhere.
    """
    path = Path(path)
    records: dict[str, InstitutionRecord] = {}
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise CsvFormatError(path, 1, "empty file") from None
        if not header or header[0] != "unit":
            raise CsvFormatError(path, 1, "header must start with 'unit'")
        has_probs = [c in header for c in PROB_COLUMNS]
        if any(has_probs) and not all(has_probs):
            raise CsvFormatError(path, 1, "p_fix, p_intermediate and p_float must appear together")
        for raw in reader:
            line = reader.line_num
            if not raw or all(c.strip() == "" for c in raw):
                continue
            if len(raw) != len(header):
                raise CsvFormatError(path, line, f"expected {len(header)} fields, found {len(raw)}")
            unit = raw[0].strip()
            if unit in records:
                raise CsvFormatError(path, line, f"duplicate unit {unit!r}")
            row = {}
            for name, cell in zip(header[1:], raw[1:]):
                try:
                    row[name] = parse_decimal(cell)
                except ValueError as exc:
                    raise CsvFormatError(path, line, f"{name}: {exc}") from None
            wri = _total(row, WRI_DIMS, "wri", WriScores, compute_wri, path, line)
            lpri = _total(row, LPRI_DIMS, "lpri", LpriScores, compute_lpri, path, line)
            regime = None
            code = row.get("err_code", math.nan)
            if not math.isnan(code):
                probs = None
                if all(has_probs):
                    probs = tuple(row[c] for c in PROB_COLUMNS)
                    if any(math.isnan(p) for p in probs):
                        probs = None
                try:
                    regime = RegimeAssignment(int(code) if float(code).is_integer() else code, probs)
                except IndexScoreError as exc:
                    raise CsvFormatError(path, line, str(exc)) from None
            rec = InstitutionRecord(unit, wri=wri, lpri=lpri, regime=regime,
                                    wri_band=_band(row.get("wri_band")),
                                    lpri_band=_band(row.get("lpri_band")))
            try:
                if not math.isnan(wri):
                    rec.wri_with_band()
                if not math.isnan(lpri):
                    rec.lpri_with_band()
            except IndexScoreError as exc:
                raise CsvFormatError(path, line, str(exc)) from None
            records[unit] = rec
    return dict(sorted(records.items()))


def _band(value) -> float:
    return 0.0 if value is None or math.isnan(value) else value


def write_institutions(records: dict[str, InstitutionRecord], path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(OUTPUT_COLUMNS)
        for unit, rec in sorted(records.items()):
            probs = rec.regime.probabilities if rec.regime else (math.nan,) * 3
            writer.writerow([
                unit, format_decimal(rec.wri), format_decimal(rec.wri_band),
                format_decimal(rec.lpri), format_decimal(rec.lpri_band),
                "" if rec.regime is None else rec.regime.code, format_decimal(rec.err),
                *(format_decimal(p) for p in probs),
            ])


def institution_columns(records: dict[str, InstitutionRecord]) -> dict[str, dict[str, float]]:
    """Per-unit ``wri``, ``lpri``, ``err`` and ``err_code`` for panel broadcasting."""
    return {
        "wri": {u: r.wri for u, r in records.items()},
        "lpri": {u: r.lpri for u, r in records.items()},
        "err": {u: r.err for u, r in records.items()},
        "err_code": {u: (np.nan if r.regime is None else float(r.regime.code)) for u, r in records.items()},
    }
