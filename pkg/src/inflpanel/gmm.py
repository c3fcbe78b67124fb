"""Difference GMM for dynamic panels.

The model is first-differenced to remove unit effects. Endogenous terms are
instrumented GMM-style by their lagged levels (``lag_min`` .. ``lag_max``,
optionally collapsed to one column per lag), exogenous terms by their own
first differences, and time effects by year indicators of the differenced
equation. Estimation follows the usual one-step / two-step scheme with
robust sandwich variances and the Windmeijer (2005) finite-sample correction
for the two-step variance.

Notes
-----
With ``u`` the differenced residuals, ``Z`` the instruments and rows grouped
by unit ``i``:

* one-step weight ``W1 = pinv(sum_i Z_i' H_i Z_i)``, ``H_i`` tridiagonal with
  2 on the diagonal and -1 between consecutive years;
* two-step weight ``W2 = pinv(sum_i Z_i' u1_i u1_i' Z_i)``;
* ``beta = pinv(X'Z W Z'X) X'Z W Z'y``.

Pseudo-inverses drop singular values below ``1e-10 * s_max``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy import stats

from .panel import INDEX_NAMES, PanelDataset, shift
from .results import (ArStatistic, EstimationError, EstimationResult, TestStatistic, normal_p, pinv,
                      symmetrize)
from .terms import Term, parse_terms

PINV_RTOL = 1e-10


@dataclass(frozen=True)
class GmmSpec:
    dependent: str
    endogenous: tuple[str, ...] = ()
    exogenous: tuple[str, ...] = ()
    time_effects: bool = True
    lag_min: int = 2
    lag_max: int | None = 4
    collapse: bool = True
    steps: int = 2
    windmeijer: bool = True

    def __post_init__(self):
        object.__setattr__(self, "endogenous", tuple(self.endogenous))
        object.__setattr__(self, "exogenous", tuple(self.exogenous))
        steps = {"one": 1, "two": 2, "onestep": 1, "twostep": 2}.get(self.steps, self.steps)
        object.__setattr__(self, "steps", int(steps))
        if self.steps not in (1, 2):
            raise ValueError(f"steps must be 1 or 2, got {self.steps!r}")
        overlap = set(self.endogenous) & set(self.exogenous)
        if overlap:
            raise ValueError(f"terms both endogenous and exogenous: {sorted(overlap)}")
        names = self.endogenous + self.exogenous
        if len(set(names)) != len(names):
            raise ValueError("regressor names must be unique")
        if not names:
            raise ValueError("at least one regressor is required")
        if self.dependent in names:
            raise ValueError("dependent variable listed among regressors")
        if self.lag_min < 2:
            raise ValueError("lag_min must be at least 2 for endogenous terms")
        if self.lag_max is not None and self.lag_max < self.lag_min:
            raise ValueError("lag_max must be >= lag_min")

    @property
    def regressors(self) -> tuple[str, ...]:
        return self.endogenous + self.exogenous


@dataclass
class InstrumentMatrix:
    values: np.ndarray
    columns: list[str]
    rows: pd.MultiIndex
    unit_starts: np.ndarray
    n_gmm: int = 0

    @property
    def count(self) -> int:
        return len(self.columns)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.values, index=self.rows, columns=self.columns)


@dataclass
class GmmSystem:
    """Differenced estimating equation ready for the GMM solver."""

    y: np.ndarray
    X: np.ndarray
    regressors: list[str]
    n_model_terms: int
    instruments: InstrumentMatrix

    @property
    def rows(self) -> pd.MultiIndex:
        return self.instruments.rows


@dataclass
class GmmStep:
    beta: np.ndarray
    residuals: np.ndarray
    weight: np.ndarray
    bread: np.ndarray
    covariance: np.ndarray


@dataclass
class GmmInternals:
    system: GmmSystem
    one_step: GmmStep
    two_step: GmmStep | None = None
    uncorrected_covariance: np.ndarray | None = None
    extra: dict = field(default_factory=dict)

    @property
    def final(self) -> GmmStep:
        return self.two_step if self.two_step is not None else self.one_step


# --------------------------------------------------------------------------
# System construction
# --------------------------------------------------------------------------

def _difference(series: pd.Series) -> pd.Series:
    return series - shift(series, 1)


def _unit_starts(rows: pd.MultiIndex) -> np.ndarray:
    units = np.asarray(rows.get_level_values("unit"))
    if len(units) == 0:
        return np.zeros(0, dtype=np.intp)
    change = np.flatnonzero(units[1:] != units[:-1]) + 1
    return np.concatenate([[0], change]).astype(np.intp)


def build_system(data: PanelDataset, spec: GmmSpec) -> GmmSystem:
    endo = parse_terms(spec.endogenous)
    exo = parse_terms(spec.exogenous)
    terms: list[Term] = endo + exo

    dy = _difference(data.series(spec.dependent))
    diffs = pd.DataFrame({t.name: _difference(t.evaluate(data)) for t in terms}, index=data.index)
    keep = dy.notna() & diffs.notna().all(axis=1)
    if not keep.any():
        raise EstimationError("no differenced observations with complete data")
    rows = data.index[keep.to_numpy()]
    y = dy[keep].to_numpy(dtype=float)
    X = diffs[keep].to_numpy(dtype=float)
    regressors = [t.name for t in terms]
    years = np.asarray(rows.get_level_values("year"))

    blocks, columns = [], []
    span = int(years.max() - data.index.get_level_values("year").min())
    lag_max = span if spec.lag_max is None else spec.lag_max
    for term in endo:
        for ell in range(spec.lag_min, lag_max + 1):
            level = term.level_at_lag(data, ell)[keep].to_numpy(dtype=float)
            level = np.where(np.isnan(level), 0.0, level)
            if spec.collapse:
                blocks.append(level[:, None])
                columns.append(f"{term.name}@L{ell}")
            else:
                for t in np.unique(years):
                    blocks.append(np.where(years == t, level, 0.0)[:, None])
                    columns.append(f"{term.name}@L{ell}[{t}]")
    if blocks:
        gmm_block = np.hstack(blocks)
        nonzero = np.any(gmm_block != 0, axis=0)
        gmm_block = gmm_block[:, nonzero]
        columns = [c for c, k in zip(columns, nonzero) if k]
        if gmm_block.shape[1] == 0:
            raise EstimationError("no lagged levels are available inside the lag window; "
                                  "lag_max exceeds the time span of every unit")
    else:
        gmm_block = np.zeros((len(rows), 0))
    n_gmm = gmm_block.shape[1]

    iv_blocks = [gmm_block]
    if exo:
        iv_blocks.append(X[:, len(endo):])
        columns += [f"D.{t.name}" for t in exo]

    n_model = len(regressors)
    if spec.time_effects:
        uniq = np.unique(years)
        dummies = (years[:, None] == uniq[None, :]).astype(float)
        X = np.hstack([X, dummies])
        regressors += [f"year[{t}]" for t in uniq]
        iv_blocks.append(dummies)
        columns += [f"year[{t}]" for t in uniq]

    Z = np.hstack(iv_blocks)
    instruments = InstrumentMatrix(Z, columns, rows, _unit_starts(rows), n_gmm)
    return GmmSystem(y, X, regressors, n_model, instruments)


def build_instruments(data: PanelDataset, spec: GmmSpec) -> InstrumentMatrix:
    return build_system(data, spec).instruments


# --------------------------------------------------------------------------
# Estimation
# --------------------------------------------------------------------------

def _unit_sums(matrix: np.ndarray, starts: np.ndarray) -> np.ndarray:
    return np.add.reduceat(matrix, starts, axis=0)


def _adjacent(rows: pd.MultiIndex) -> np.ndarray:
    """True where row r+1 is the same unit one year later."""
    units = np.asarray(rows.get_level_values("unit"))
    years = np.asarray(rows.get_level_values("year"))
    return (units[1:] == units[:-1]) & (years[1:] == years[:-1] + 1)


def _h_product(Z: np.ndarray, adjacent: np.ndarray) -> np.ndarray:
    HZ = 2.0 * Z
    HZ[:-1] -= Z[1:] * adjacent[:, None]
    HZ[1:] -= Z[:-1] * adjacent[:, None]
    return HZ


def _solve(ZX: np.ndarray, Zy: np.ndarray, W: np.ndarray):
    M = ZX.T @ W @ ZX
    s = np.linalg.svd(M, compute_uv=False)
    k = M.shape[0]
    if s[0] == 0 or np.sum(s > PINV_RTOL * s[0]) < k:
        raise EstimationError("X'Z W Z'X is singular: the parameters are not identified "
                              "by the instrument set")
    bread = pinv(M, PINV_RTOL)
    return bread @ (ZX.T @ W @ Zy), bread


def fit_gmm(data: PanelDataset, spec: GmmSpec) -> EstimationResult:
    system = build_system(data, spec)
    Z, X, y = system.instruments.values, system.X, system.y
    n_rows, K = X.shape
    L = Z.shape[1]
    if L < K:
        raise EstimationError(f"{L} instruments for {K} parameters")
    starts = system.instruments.unit_starts
    n_units = len(starts)

    ZX, Zy = Z.T @ X, Z.T @ y
    W1 = pinv(Z.T @ _h_product(Z, _adjacent(system.rows)), PINV_RTOL)
    beta1, bread1 = _solve(ZX, Zy, W1)
    u1 = y - X @ beta1
    G1 = _unit_sums(Z * u1[:, None], starts)
    omega1 = G1.T @ G1
    V1 = symmetrize(bread1 @ ZX.T @ W1 @ omega1 @ W1 @ ZX @ bread1)
    one = GmmStep(beta1, u1, W1, bread1, V1)
    internals = GmmInternals(system, one)

    if spec.steps == 2:
        W2 = pinv(omega1, PINV_RTOL)
        beta2, bread2 = _solve(ZX, Zy, W2)
        u2 = y - X @ beta2
        V2 = symmetrize(bread2)
        internals.uncorrected_covariance = V2
        cov = V2
        if spec.windmeijer:
            cov = windmeijer_covariance(system, one, beta2, u2, W2, bread2)
        internals.two_step = GmmStep(beta2, u2, W2, bread2, cov)

    final = internals.final
    k = system.n_model_terms
    names = system.regressors[:k]
    diagnostics = {"hansen": hansen_test(internals)}
    steps = [("", final)]
    if spec.steps == 2:
        steps.append(("_onestep", one))
    for suffix, step in steps:
        for m in (1, 2):
            try:
                diagnostics[f"ar{m}{suffix}"] = ar_test(internals, m, step=step)
            except EstimationError as exc:
                diagnostics[f"ar{m}{suffix}"] = TestStatistic(math.nan, math.nan, note=str(exc))

    return EstimationResult(
        estimator="gmm",
        coefficients=pd.Series(final.beta[:k], index=names, name="coef"),
        covariance=pd.DataFrame(final.covariance[:k, :k], index=names, columns=names),
        residuals=pd.Series(final.residuals, index=system.rows, name="residual"),
        n_obs=n_rows,
        n_units=n_units,
        diagnostics=diagnostics,
        metadata={"steps": spec.steps, "windmeijer": spec.windmeijer and spec.steps == 2,
                  "collapse": spec.collapse, "lag_min": spec.lag_min, "lag_max": spec.lag_max,
                  "time_effects": spec.time_effects, "instrument_count": L, "parameters": K},
        internals=internals,
    )


def windmeijer_covariance(system: GmmSystem, one: GmmStep, beta2, u2, W2, bread2) -> np.ndarray:
    """Two-step variance with the finite-sample correction for the estimated weight.

    ``V_c = V2 + D V2 + V2 D' + D V1 D'`` where column ``k`` of ``D`` is the
    derivative of the two-step estimator with respect to the one-step
    coefficient ``k`` through the weight matrix.
    """
    Z, X = system.instruments.values, system.X
    starts = system.instruments.unit_starts
    G1 = _unit_sums(Z * one.residuals[:, None], starts)
    left = bread2 @ X.T @ Z @ W2
    right = W2 @ (Z.T @ u2)
    D = np.empty((X.shape[1], X.shape[1]))
    for k in range(X.shape[1]):
        GX = _unit_sums(Z * X[:, [k]], starts)
        d_omega = -(GX.T @ G1 + G1.T @ GX)
        D[:, k] = -left @ d_omega @ right
    V2 = bread2
    return symmetrize(V2 + D @ V2 + V2 @ D.T + D @ one.covariance @ D.T)


def hansen_test(internals: GmmInternals) -> TestStatistic:
    """Hansen J at the final-step residuals with the two-step weight.

    ``J = (Z'u)' W2 (Z'u)`` with ``W2`` built from one-step residuals, which
    equals ``n g' S^-1 g`` for averaged moments ``g``.
    """
    system = internals.system
    Z = system.instruments.values
    dof = Z.shape[1] - system.X.shape[1]
    if dof < 0:
        raise EstimationError("more parameters than instruments")
    if dof == 0:
        return TestStatistic(0.0, math.nan, 0, note="exactly identified")
    if internals.two_step is not None:
        W2 = internals.two_step.weight
    else:
        G1 = _unit_sums(Z * internals.one_step.residuals[:, None], system.instruments.unit_starts)
        W2 = pinv(G1.T @ G1, PINV_RTOL)
    g = Z.T @ internals.final.residuals
    J = float(g @ W2 @ g)
    return TestStatistic(J, float(stats.chi2.sf(J, dof)), dof)


def lagged_residuals(residuals: np.ndarray, rows: pd.MultiIndex, m: int) -> np.ndarray:
    """Residual of the same unit ``m`` years earlier, 0 where it is not in the sample."""
    lookup = pd.Series(residuals, index=rows)
    target = pd.MultiIndex.from_arrays(
        [rows.get_level_values("unit"), rows.get_level_values("year") - m], names=INDEX_NAMES)
    return lookup.reindex(target).fillna(0.0).to_numpy()


def ar_test(internals: GmmInternals, m: int, step: GmmStep | None = None) -> TestStatistic:
    """Arellano-Bond test for order-``m`` autocorrelation in differenced residuals.

    The variance includes the terms for estimation error in the coefficients,
    using the weight and covariance of the given step.
    """
    if m < 1:
        raise ValueError("order must be positive")
    step = step or internals.final
    system = internals.system
    Z, X = system.instruments.values, system.X
    rows = system.rows
    starts = system.instruments.unit_starts
    u = step.residuals
    w = lagged_residuals(u, rows, m)
    present = lagged_residuals(np.ones_like(u), rows, m) > 0
    if not present.any():
        raise EstimationError(f"no unit has differenced residuals {m} years apart")

    numerator = float(w @ u)
    wu = _unit_sums((w * u)[:, None], starts)[:, 0]
    g = _unit_sums(Z * u[:, None], starts)
    wX = w @ X
    zuw = g.T @ wu
    variance = (float(wu @ wu)
                - 2.0 * float(wX @ step.bread @ X.T @ Z @ step.weight @ zuw)
                + float(wX @ step.covariance @ wX))
    if not variance > 0:
        return ArStatistic(math.nan, math.nan, note="nonpositive variance",
                           numerator=numerator, variance=variance)
    z = numerator / math.sqrt(variance)
    return ArStatistic(z, normal_p(z), numerator=numerator, variance=variance)


def effective_persistence(result: EstimationResult, wri: float, err: float,
                          lagged: str = "L.inflation", wri_term: str | None = None,
                          err_term: str | None = None) -> float:
    """Lagged-inflation coefficient implied at given index values.

    ``rho0 + rho1 * wri + rho2 * err``; absent interaction terms contribute 0.
    """
    wri_term = wri_term or f"{lagged}:wri"
    err_term = err_term or f"{lagged}:err"
    c = result.coefficients
    value = float(c[lagged])
    if wri_term in c.index:
        value += float(c[wri_term]) * wri
    if err_term in c.index:
        value += float(c[err_term]) * err
    return value
