"""Regression tables in the fixed-effects / difference-GMM column layout."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

from .results import EstimationResult

AR2_LABEL = "Arellano-Bond test for AR(2)"
HANSEN_LABEL = "Hansen test for overid. restrictions (p-value)"
FAMILY_LABELS = {"fe": "Fixed effects", "gmm": "Difference-GMM"}
DEFAULT_LABELS = {
    "L.inflation": "Lagged inflation",
    "L.inflation:wri": "Lagged inflation * WRI",
    "L.inflation:lpri": "Lagged inflation * LPRI",
    "L.inflation:err": "Lagged inflation * exchange rate regime",
    "import_prices": "Change in import prices",
    "energy_prices": "Change in energy prices",
    "gdp_growth": "GDP growth",
}


def stars(p: float) -> str:
    if not math.isfinite(p):
        return ""
    if p < 0.01:
        return "***"
    if p < 0.05:
        return "**"
    if p < 0.10:
        return "*"
    return ""


def fmt(value, digits: int = 3) -> str:
    if value is None or (isinstance(value, float) and not math.isfinite(value)):
        return ""
    return f"{value:.{digits}f}"


def coefficient_cell(result: EstimationResult, term: str, digits: int = 3) -> str:
    if term not in result.coefficients.index:
        return ""
    coef = float(result.coefficients[term])
    se = float(result.standard_errors[term])
    p = float(result.pvalues[term])
    return f"{coef:.{digits}f}{stars(p)} ({se:.{digits}f})"


@dataclass
class TableColumn:
    family: str
    label: str
    result: EstimationResult


def regression_table(columns: list[TableColumn], labels: dict[str, str] | None = None,
                     digits: int = 3) -> list[list[str]]:
    """Rows of the report: header, estimator band, coefficients, then footer rows."""
    labels = {**DEFAULT_LABELS, **(labels or {})}
    terms: list[str] = []
    for col in columns:
        for term in col.result.coefficients.index:
            if term not in terms:
                terms.append(term)
    terms = _order_terms(terms)

    rows = [["", *(f"({k})" for k in range(1, len(columns) + 1))],
            ["Estimator", *(FAMILY_LABELS.get(c.family, c.family) for c in columns)],
            ["Specification", *(c.label for c in columns)]]
    for term in terms:
        rows.append([labels.get(term, term), *(coefficient_cell(c.result, term, digits) for c in columns)])
    rows.append(["Observations", *(str(c.result.n_obs) for c in columns)])
    rows.append(["R-squared", *(fmt(c.result.r_squared, digits) if c.family == "fe" else ""
                                for c in columns)])
    rows.append(["Number of units", *(str(c.result.n_units) for c in columns)])
    rows.append([AR2_LABEL, *(_diag_p(c.result, "ar2", digits) for c in columns)])
    rows.append([HANSEN_LABEL, *(_diag_p(c.result, "hansen", digits) for c in columns)])
    return rows


def _diag_p(result: EstimationResult, key: str, digits: int) -> str:
    stat = result.diagnostics.get(key)
    if stat is None:
        return ""
    if stat.note == "exactly identified":
        return "exactly identified"
    return fmt(stat.p_value, digits)


def _order_terms(terms: list[str]) -> list[str]:
    # lagged-dependent terms first, then their interactions, then the rest
    def key(item):
        pos, term = item
        if term.startswith("L") and "." in term.split(":")[0]:
            return (0 if ":" not in term else 1, pos)
        return (2, pos)
    return [t for _, t in sorted(enumerate(terms), key=key)]


def write_rows(rows: list[list[str]], path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        csv.writer(fh, lineterminator="\n").writerows(rows)


def render_text(rows: list[list[str]]) -> str:
    widths = [max(len(r[k]) for r in rows) for k in range(len(rows[0]))]
    lines = []
    for i, row in enumerate(rows):
        cells = [row[0].ljust(widths[0])] + [c.rjust(w) for c, w in zip(row[1:], widths[1:])]
        lines.append("  ".join(cells).rstrip())
        if i == 2:
            lines.append("-" * len(lines[0]))
    lines.append("*, ** and *** denote significance at the 10%, 5% and 1% level. "
                 "Robust standard errors in parentheses.")
    return "\n".join(lines) + "\n"


def diagnostics_rows(columns: list[TableColumn]) -> list[list[str]]:
    rows = [["column", "estimator", "specification", "diagnostic", "statistic", "dof", "p_value", "note"]]
    for k, col in enumerate(columns, start=1):
        r = col.result
        for name, stat in r.diagnostics.items():
            rows.append([f"({k})", col.family, col.label, name, _full(stat.statistic),
                         "" if stat.dof is None else str(stat.dof), _full(stat.p_value), stat.note])
        if "instrument_count" in r.metadata:
            rows.append([f"({k})", col.family, col.label, "instrument_count",
                         str(r.metadata["instrument_count"]), "", "", ""])
    return rows


def coefficient_rows(columns: list[TableColumn]) -> list[list[str]]:
    rows = [["column", "estimator", "specification", "term", "coef", "se", "p_value"]]
    for k, col in enumerate(columns, start=1):
        r = col.result
        se, p = r.standard_errors, r.pvalues
        for term in r.coefficients.index:
            rows.append([f"({k})", col.family, col.label, term, _full(r.coefficients[term]),
                         _full(se[term]), _full(p[term])])
    return rows


def _full(value) -> str:
    value = float(value)
    return "" if not math.isfinite(value) else repr(value)
