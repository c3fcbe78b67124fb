"""Two-way fixed-effects estimator with country-clustered standard errors.

Estimation uses explicit unit and year indicator columns, which is exact on
unbalanced panels. Rows with any missing cell among the dependent variable
and the regressors are deleted listwise.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .panel import PanelDataset
from .results import EstimationError, EstimationResult, symmetrize
from .terms import model_frame, parse_terms

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class FeSpec:
    dependent: str
    regressors: tuple[str, ...]
    unit_effects: bool = True
    time_effects: bool = True
    cluster_by: str = "unit"

    def __post_init__(self):
        object.__setattr__(self, "regressors", tuple(self.regressors))
        if not self.regressors:
            raise ValueError("at least one regressor is required")
        if self.dependent in self.regressors:
            raise ValueError("dependent variable listed among regressors")
        if len(set(self.regressors)) != len(self.regressors):
            raise ValueError("regressor names must be unique")
        if self.cluster_by != "unit":
            raise ValueError("only clustering by unit is supported")


def cluster_robust_covariance(design: np.ndarray, residuals: np.ndarray, clusters,
                              n_params: int | None = None) -> np.ndarray:
    """Sandwich covariance with scores summed within clusters.

    The small-sample factor is ``G/(G-1) * (N-1)/(N-K)`` where ``K`` defaults
    to the number of design columns.
    """
    design = np.asarray(design, dtype=float)
    residuals = np.asarray(residuals, dtype=float)
    codes, _ = pd.factorize(np.asarray(clusters))
    n_clusters = codes.max() + 1 if len(codes) else 0
    if n_clusters < 2:
        raise EstimationError("cluster-robust covariance needs at least two clusters")
    n, p = design.shape
    k = p if n_params is None else n_params
    if n <= k:
        raise EstimationError("fewer observations than parameters")
    scores = np.zeros((n_clusters, p))
    np.add.at(scores, codes, design * residuals[:, None])
    bread = np.linalg.pinv(design.T @ design)
    meat = scores.T @ scores
    factor = n_clusters / (n_clusters - 1) * (n - 1) / (n - k)
    return symmetrize(factor * bread @ meat @ bread)


def _singleton_years(frame: pd.DataFrame) -> list[int]:
    years = frame.index.get_level_values("year")
    counts = pd.Series(1, index=years).groupby(level=0).size()
    return [int(y) for y in counts[counts < 2].index]


def dummy_design(frame: pd.DataFrame, regressors, unit_effects: bool, time_effects: bool):
    """Regressors plus indicator columns; returns the matrix and its column names."""
    units = frame.index.get_level_values("unit")
    years = frame.index.get_level_values("year")
    blocks = [frame[list(regressors)].to_numpy(dtype=float)]
    names = list(regressors)
    if unit_effects:
        uniq = sorted(set(units))
        blocks.append((np.asarray(units)[:, None] == np.asarray(uniq)[None, :]).astype(float))
        names += [f"unit[{u}]" for u in uniq]
    else:
        blocks.append(np.ones((len(frame), 1)))
        names.append("const")
    if time_effects:
        uniq = sorted(set(years))[1:]
        blocks.append((np.asarray(years)[:, None] == np.asarray(uniq)[None, :]).astype(float))
        names += [f"year[{y}]" for y in uniq]
    return np.hstack(blocks), names


def fit_fe(data: PanelDataset, spec: FeSpec) -> EstimationResult:
    terms = parse_terms(spec.regressors)
    frame = model_frame(data, spec.dependent, terms).dropna()
    if spec.time_effects:
        lonely = _singleton_years(frame)
        if lonely:
            log.warning("dropping years observed for a single unit: %s", lonely)
            frame = frame[~frame.index.get_level_values("year").isin(lonely)]
    regressors = [t.name for t in terms]
    design, names = dummy_design(frame, regressors, spec.unit_effects, spec.time_effects)
    n, p = design.shape
    if n <= p:
        raise EstimationError(f"{n} observations for {p} parameters")
    rank = np.linalg.matrix_rank(design)
    if rank < p:
        raise EstimationError(
            f"design is rank deficient ({rank} < {p}); a regressor may be collinear "
            "with the fixed effects or with another regressor")
    y = frame[spec.dependent].to_numpy(dtype=float)
    beta, *_ = np.linalg.lstsq(design, y, rcond=None)
    resid = y - design @ beta

    units = frame.index.get_level_values("unit")
    n_units = len(set(units))
    # absorbed unit effects are nested in the clusters and are not counted in K
    k_eff = p - n_units + 1 if spec.unit_effects else p
    cov = cluster_robust_covariance(design, resid, units, n_params=k_eff)

    kr = len(regressors)
    if spec.unit_effects:
        centred = y - pd.Series(y, index=frame.index).groupby(level="unit").transform("mean").to_numpy()
        kind = "within"
    else:
        centred = y - y.mean()
        kind = "overall"
    tss = float(centred @ centred)
    r2 = 1.0 - float(resid @ resid) / tss if tss > 0 else float("nan")

    return EstimationResult(
        estimator="fe",
        coefficients=pd.Series(beta[:kr], index=regressors, name="coef"),
        covariance=pd.DataFrame(cov[:kr, :kr], index=regressors, columns=regressors),
        residuals=pd.Series(resid, index=frame.index, name="residual"),
        n_obs=n,
        n_units=n_units,
        r_squared=r2,
        r_squared_kind=kind,
        reference=("t", n_units - 1),
        metadata={"unit_effects": spec.unit_effects, "time_effects": spec.time_effects,
                  "small_sample_k": k_eff, "parameters": p},
    )
