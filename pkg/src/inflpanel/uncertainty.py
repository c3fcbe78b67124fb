"""Propagate index measurement and regime classification uncertainty.

Each replication redraws the institutional variables of every unit (one draw
per unit, since the indices are time-invariant), rebuilds the interaction
terms and refits the unchanged GMM specification. The random stream of a
replication depends only on ``(seed, draw_index)``, so results do not depend
on execution order or on the number of worker threads.
"""

from __future__ import annotations

import csv
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .gmm import GmmSpec, fit_gmm
from .indices import (REGIME_CODES, IndexWithBand, InstitutionRecord, RegimeAssignment,
                      regime_rigidity)
from .panel import PanelDataset, format_decimal
from .results import EstimationError, EstimationResult

log = logging.getLogger(__name__)

TARGETS = ("wri", "lpri", "regime", "both")
DISTRIBUTIONS = ("uniform", "normal")
DEFAULT_COEFFICIENT = {
    "wri": "L.inflation:wri",
    "lpri": "L.inflation:lpri",
    "regime": "L.inflation:err",
    "both": "L.inflation:wri",
}


class SimulationError(RuntimeError):
    pass


@dataclass(frozen=True)
class UncertaintySpec:
    base_model: GmmSpec
    target: str = "wri"
    distribution: str = "uniform"
    reps: int = 500
    seed: int = 0
    significance_level: float = 0.05
    coefficient: str | None = None

    def __post_init__(self):
        if self.target not in TARGETS:
            raise ValueError(f"target must be one of {TARGETS}, got {self.target!r}")
        if self.distribution not in DISTRIBUTIONS:
            raise ValueError(f"distribution must be one of {DISTRIBUTIONS}")
        if self.reps < 1:
            raise ValueError("reps must be at least 1")
        if not 0 < self.significance_level < 1:
            raise ValueError("significance_level must lie in (0, 1)")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        if self.coefficient is None:
            object.__setattr__(self, "coefficient", DEFAULT_COEFFICIENT[self.target])

    @property
    def perturbs_wri(self) -> bool:
        return self.target in ("wri", "both")

    @property
    def perturbs_regime(self) -> bool:
        return self.target in ("regime", "both")


@dataclass
class DrawRecord:
    draw_index: int
    converged: bool
    coefficient: float = math.nan
    standard_error: float = math.nan
    p_value: float = math.nan
    ar2_p: float = math.nan
    hansen_p: float = math.nan
    perturbed: dict = field(default_factory=dict, repr=False)
    error: str = ""


@dataclass(frozen=True)
class Baseline:
    coefficient: float
    standard_error: float
    ar2_p: float
    hansen_p: float


@dataclass(frozen=True)
class SimulationSummary:
    mean: float
    median: float
    sd: float
    share_positive: float
    share_nonpositive: float
    share_negative_significant: float
    ar2_p_summary: float
    hansen_p_summary: float
    converged: int
    failures: int
    significance_level: float = 0.05
    baseline: Baseline | None = None


def draw_index(value: IndexWithBand, distribution: str, rng: np.random.Generator) -> float:
    """One realisation of a banded index, clipped to its domain.

    Uniform draws cover ``point +/- band``; normal draws use sd ``band / 2``.
    """
    if value.band == 0:
        return value.point
    if distribution == "uniform":
        x = rng.uniform(value.point - value.band, value.point + value.band)
    elif distribution == "normal":
        x = rng.normal(value.point, value.band / 2)
    else:
        raise ValueError(f"unknown distribution {distribution!r}")
    return float(min(max(x, value.domain_min), value.domain_max))


def draw_regime(assignment: RegimeAssignment, rng: np.random.Generator) -> int:
    return int(REGIME_CODES[rng.choice(3, p=np.asarray(assignment.probabilities))])


def draw_rng(seed: int, draw: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(draw)]))


def _institution_values(records: dict[str, InstitutionRecord], wri=None, lpri=None, codes=None):
    wri = wri if wri is not None else {u: r.wri for u, r in records.items()}
    lpri = lpri if lpri is not None else {u: r.lpri for u, r in records.items()}
    if codes is None:
        codes = {u: (None if r.regime is None else r.regime.code) for u, r in records.items()}
    return {
        "wri": wri,
        "lpri": lpri,
        "err_code": {u: (math.nan if c is None else float(c)) for u, c in codes.items()},
        "err": {u: (math.nan if c is None else regime_rigidity(c)) for u, c in codes.items()},
    }


def _fit_values(data: PanelDataset, spec: UncertaintySpec, values: dict) -> EstimationResult:
    return fit_gmm(data.with_unit_values(values), spec.base_model)


def _extract(result: EstimationResult, name: str):
    if name not in result.coefficients.index:
        raise SimulationError(f"coefficient {name!r} is not part of the model")
    return (float(result.coefficients[name]), float(result.standard_errors[name]),
            float(result.pvalues[name]), result.diagnostics["ar2"].p_value,
            result.diagnostics["hansen"].p_value)


def perturb(records: dict[str, InstitutionRecord], spec: UncertaintySpec,
            rng: np.random.Generator) -> dict:
    """Draw one set of institutional values; units are visited in sorted order."""
    wri, lpri, codes = {}, {}, {}
    for unit in sorted(records):
        rec = records[unit]
        wri[unit] = rec.wri
        lpri[unit] = rec.lpri
        codes[unit] = None if rec.regime is None else rec.regime.code
        if spec.perturbs_wri and not math.isnan(rec.wri):
            wri[unit] = draw_index(rec.wri_with_band(), spec.distribution, rng)
        if spec.target == "lpri" and not math.isnan(rec.lpri):
            lpri[unit] = draw_index(rec.lpri_with_band(), spec.distribution, rng)
        if spec.perturbs_regime and rec.regime is not None:
            codes[unit] = draw_regime(rec.regime, rng)
    return _institution_values(records, wri, lpri, codes)


def _one_draw(data, records, spec: UncertaintySpec, k: int) -> DrawRecord:
    values = perturb(records, spec, draw_rng(spec.seed, k))
    try:
        result = _fit_values(data, spec, values)
        coef, se, p, ar2_p, hansen_p = _extract(result, spec.coefficient)
    except (EstimationError, np.linalg.LinAlgError) as exc:
        return DrawRecord(k, False, perturbed=values, error=str(exc))
    if not (math.isfinite(coef) and math.isfinite(se)):
        return DrawRecord(k, False, perturbed=values, error="non-finite estimate")
    return DrawRecord(k, True, coef, se, p, ar2_p, hansen_p, perturbed=values)


def run_uncertainty(data: PanelDataset, records: dict[str, InstitutionRecord],
                    spec: UncertaintySpec, threads: int = 1):
    """Baseline fit plus ``spec.reps`` perturbed refits.

    Returns ``(summary, draws)`` with draws ordered by index.
    """
    try:
        baseline_fit = _fit_values(data, spec, _institution_values(records))
        b = _extract(baseline_fit, spec.coefficient)
    except EstimationError as exc:
        raise SimulationError(f"baseline fit failed: {exc}") from exc
    baseline = Baseline(b[0], b[1], b[3], b[4])

    def work(k):
        return _one_draw(data, records, spec, k)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            draws = list(pool.map(work, range(spec.reps)))
    else:
        draws = [work(k) for k in range(spec.reps)]
    draws.sort(key=lambda d: d.draw_index)
    failures = sum(not d.converged for d in draws)
    if failures:
        log.warning("%d of %d draws failed to estimate", failures, spec.reps)
    if failures == spec.reps:
        raise SimulationError("every draw failed to estimate")
    summary = summarize(draws, spec.significance_level)
    return replace(summary, baseline=baseline), draws


def summarize(draws, significance_level: float = 0.05) -> SimulationSummary:
    """Distribution of the recorded coefficient over converged draws.

    The share of significant negative coefficients is taken over all converged
    draws, so it can never exceed the share of nonpositive ones.
    """
    ok = [d for d in draws if d.converged]
    if not ok:
        raise SimulationError("no converged draws to summarise")
    coef = np.array([d.coefficient for d in ok])
    p = np.array([d.p_value for d in ok])
    n = len(coef)
    positive = int(np.sum(coef > 0))
    neg_sig = int(np.sum((coef < 0) & (p < significance_level)))
    # moments of deviations from the first draw: identical draws give their
    # common value and sd 0 exactly, which np.mean does not guarantee
    dev = coef - coef[0]
    shift = float(np.mean(dev))
    return SimulationSummary(
        mean=float(coef[0] + shift),
        median=float(np.median(coef)),
        sd=float(np.sqrt(np.sum((dev - shift) ** 2) / (n - 1))) if n > 1 else math.nan,
        share_positive=positive / n,
        share_nonpositive=(n - positive) / n,
        share_negative_significant=neg_sig / n,
        ar2_p_summary=_nanmedian([d.ar2_p for d in ok]),
        hansen_p_summary=_nanmedian([d.hansen_p for d in ok]),
        converged=n,
        failures=len(draws) - n,
        significance_level=significance_level,
    )


def _nanmedian(values) -> float:
    arr = np.asarray(values, dtype=float)
    arr = arr[~np.isnan(arr)]
    return float(np.median(arr)) if len(arr) else math.nan


# --------------------------------------------------------------------------
# Output files
# --------------------------------------------------------------------------

DRAW_COLUMNS = ("draw", "coef", "se", "p", "ar2_p", "hansen_p", "converged")


def write_draws(draws, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(DRAW_COLUMNS)
        for d in draws:
            w.writerow([d.draw_index, format_decimal(d.coefficient), format_decimal(d.standard_error),
                        format_decimal(d.p_value), format_decimal(d.ar2_p),
                        format_decimal(d.hansen_p), int(d.converged)])


def significance_label(level: float) -> str:
    return f"Share of negative coefficients which are significant at {100 * level:g}%"


def summary_rows(summary: SimulationSummary) -> list[tuple[str, str, float]]:
    """``(block, label, value)`` rows in the standard reporting order."""
    b = summary.baseline or Baseline(math.nan, math.nan, math.nan, math.nan)
    return [
        ("Baseline", "Coefficient", b.coefficient),
        ("Baseline", "Standard error", b.standard_error),
        ("Baseline", "AR(2) p-value", b.ar2_p),
        ("Baseline", "Hansen p-value", b.hansen_p),
        ("Simulated", "Mean of coefficients", summary.mean),
        ("Simulated", "Median of the coefficients", summary.median),
        ("Simulated", "SD of the coefficients", summary.sd),
        ("Simulated", "Share of positive coefficients", summary.share_positive),
        ("Simulated", significance_label(summary.significance_level), summary.share_negative_significant),
        ("Simulated", "AR(2) p-value", summary.ar2_p_summary),
        ("Simulated", "Hansen p-value", summary.hansen_p_summary),
        ("Simulated", "Failed draws", summary.failures),
    ]


def write_summary(summaries: dict[str, SimulationSummary], path, digits: int = 3) -> None:
    """One column per variant, rows labelled as in the regression-study layout."""
    names = list(summaries)
    layouts = [summary_rows(summaries[n]) for n in names]
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["block", "statistic", *names])
        for i, (block, label, _) in enumerate(layouts[0]):
            cells = []
            for rows in layouts:
                value = rows[i][2]
                if label == "Failed draws":
                    cells.append(str(int(value)))
                else:
                    cells.append("" if value is None or math.isnan(value) else f"{value:.{digits}f}")
            w.writerow([block, label, *cells])
