"""Synthetic inflation panels with institution-dependent persistence.

Forward model::

    pi[i,t] = alpha[i] + lambda[t] + (rho0 + rho1*WRI[i] + rho2*ERR[i]) * pi[i,t-1]
              + X[i,t]' beta + eps[i,t]

with iid normal shocks. The first ``burn_in`` periods are discarded and the
remainder is labelled from ``start_year`` on.
"""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import pandas as pd

from .indices import InstitutionRecord, RegimeAssignment, regime_rigidity, write_institutions
from .panel import INDEX_NAMES, PanelDataset, format_decimal

CONTROLS = ("import_prices", "energy_prices", "gdp_growth")


class DgpError(ValueError):
    pass


@dataclass(frozen=True)
class Law:
    """Sampling rule: ``uniform(a, b)``, ``normal(a, b)`` (mean, sd) or ``constant(a)``."""

    kind: str
    a: float = 0.0
    b: float = 0.0

    def sample(self, rng: np.random.Generator, size) -> np.ndarray:
        if self.kind == "uniform":
            return rng.uniform(self.a, self.b, size)
        if self.kind == "normal":
            return rng.normal(self.a, self.b, size)
        if self.kind == "constant":
            return np.full(size, float(self.a))
        raise DgpError(f"unknown law {self.kind!r}")

    @classmethod
    def coerce(cls, value) -> "Law":
        if isinstance(value, Law):
            return value
        if isinstance(value, dict):
            return cls(**value)
        if isinstance(value, (int, float)):
            return cls("constant", float(value))
        kind, *args = value
        return cls(kind, *args)


# dispersion of typical annual macro controls; fixture choices only
DEFAULT_CONTROL_LAWS = {
    "import_prices": Law("normal", 0.0, 0.09),
    "energy_prices": Law("normal", -0.02, 0.35),
    "gdp_growth": Law("normal", 2.82, 4.28),
}
DEFAULT_BETA = {"import_prices": 5.0, "energy_prices": 7.0, "gdp_growth": -0.4}


@dataclass(frozen=True)
class DgpParams:
    n_units: int = 100
    n_periods: int = 12
    rho0: float = 0.5
    rho1: float = 0.0
    rho2: float = 0.0
    beta: dict = field(default_factory=lambda: dict(DEFAULT_BETA))
    sigma_eps: float = 1.0
    sigma_alpha: float = 1.0
    lambda_t: str | Sequence[float] = "random"
    lambda_sd: float = 0.5
    wri_law: Law = Law("uniform", 0.0, 6.0)
    regime_law: tuple[float, float, float] = (1 / 3, 1 / 3, 1 / 3)
    control_laws: dict = field(default_factory=lambda: dict(DEFAULT_CONTROL_LAWS))
    wri_band: float = 0.5
    burn_in: int = 50
    initial_value: float | None = None
    start_year: int = 2013
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "wri_law", Law.coerce(self.wri_law))
        object.__setattr__(self, "control_laws",
                           {k: Law.coerce(v) for k, v in self.control_laws.items()})
        object.__setattr__(self, "regime_law", tuple(float(p) for p in self.regime_law))
        if not self.sigma_eps > 0:
            raise DgpError("sigma_eps must be positive")
        if not self.sigma_alpha >= 0 or not self.lambda_sd >= 0:
            raise DgpError("sigma_alpha and lambda_sd must be nonnegative")
        if self.n_units < 1 or self.n_periods < 1 or self.burn_in < 0:
            raise DgpError("n_units and n_periods must be positive, burn_in nonnegative")
        if len(self.regime_law) != 3 or abs(sum(self.regime_law) - 1) > 1e-12:
            raise DgpError("regime_law must be three probabilities summing to 1")
        unknown = set(self.beta) - set(self.control_laws)
        if unknown:
            raise DgpError(f"beta given for controls without a sampling law: {sorted(unknown)}")
        if not isinstance(self.lambda_t, str) and len(self.lambda_t) != self.n_periods:
            raise DgpError("a fixed lambda_t vector needs one value per period")

    def as_dict(self) -> dict:
        d = asdict(self)
        d["wri_law"] = asdict(self.wri_law)
        d["control_laws"] = {k: asdict(v) for k, v in self.control_laws.items()}
        return d


@dataclass
class DgpTruth:
    params: DgpParams
    units: list[str]
    alpha: np.ndarray
    wri: np.ndarray
    regime: np.ndarray
    err: np.ndarray
    lambdas: np.ndarray

    @property
    def effective_rho(self) -> np.ndarray:
        p = self.params
        return p.rho0 + p.rho1 * self.wri + p.rho2 * self.err

    def institutions(self) -> dict[str, InstitutionRecord]:
        return {
            u: InstitutionRecord(u, wri=float(w), wri_band=self.params.wri_band,
                                 regime=RegimeAssignment(int(c)))
            for u, w, c in zip(self.units, self.wri, self.regime)
        }


def unit_labels(n: int) -> list[str]:
    width = max(3, len(str(n)))
    return [f"u{k:0{width}d}" for k in range(1, n + 1)]


def generate(params: DgpParams) -> tuple[PanelDataset, DgpTruth]:
    rng = np.random.default_rng(params.seed)
    n, T, burn = params.n_units, params.n_periods, params.burn_in
    total = burn + T

    alpha = rng.normal(0.0, params.sigma_alpha, n)
    wri = params.wri_law.sample(rng, n)
    if np.any(wri < 0) or np.any(wri > 6):
        raise DgpError("wri_law produced values outside [0, 6]")
    regime = rng.choice(np.array([1, 2, 3]), size=n, p=np.asarray(params.regime_law))
    err = np.array([regime_rigidity(int(c)) for c in regime])
    rho = params.rho0 + params.rho1 * wri + params.rho2 * err
    bad = np.flatnonzero(np.abs(rho) >= 1)
    units = unit_labels(n)
    if len(bad):
        raise DgpError("non-stationary effective persistence for units "
                       + ", ".join(f"{units[k]} ({rho[k]:.3f})" for k in bad[:10]))

    if isinstance(params.lambda_t, str):
        if params.lambda_t != "random":
            raise DgpError(f"lambda_t must be 'random' or a vector, got {params.lambda_t!r}")
        lambdas = rng.normal(0.0, params.lambda_sd, total)
    else:
        lambdas = np.concatenate([np.zeros(burn), np.asarray(params.lambda_t, dtype=float)])

    controls = {name: law.sample(rng, (n, total)) for name, law in params.control_laws.items()}
    eps = rng.normal(0.0, params.sigma_eps, (n, total))
    drift = np.zeros((n, total))
    for name, coef in params.beta.items():
        drift += coef * controls[name]

    pi = np.empty((n, total))
    if params.initial_value is None:
        prev = alpha / (1 - rho) + rng.normal(0.0, 1.0, n) * params.sigma_eps / np.sqrt(1 - rho**2)
    else:
        prev = np.full(n, float(params.initial_value))
    for t in range(total):
        prev = alpha + lambdas[t] + rho * prev + drift[:, t] + eps[:, t]
        pi[:, t] = prev

    keep = slice(burn, total)
    years = np.arange(params.start_year, params.start_year + T)
    index = pd.MultiIndex.from_product([units, years], names=INDEX_NAMES)
    cols = {"inflation": pi[:, keep].ravel()}
    for name in params.control_laws:
        cols[name] = controls[name][:, keep].ravel()
    cols["wri"] = np.repeat(wri, T)
    cols["err_code"] = np.repeat(regime.astype(float), T)
    cols["err"] = np.repeat(err, T)
    data = PanelDataset(pd.DataFrame(cols, index=index))
    truth = DgpTruth(params, units, alpha, wri, regime, err, lambdas[keep])
    return data, truth


INSTITUTION_COLUMNS = ("wri", "err_code", "err")


def inject_missingness(data: PanelDataset, rate: float, rng: np.random.Generator,
                       columns: Sequence[str] | None = None) -> PanelDataset:
    """Blank each non-key cell independently with probability ``rate``."""
    if not 0 <= rate < 1:
        raise DgpError("rate must lie in [0, 1)")
    frame = data.frame
    columns = list(frame.columns) if columns is None else list(columns)
    mask = rng.random((len(frame), len(columns))) < rate
    values = frame[columns].to_numpy()
    values[mask] = np.nan
    frame[columns] = values
    return PanelDataset(frame)


def write_truth(truth: DgpTruth, directory) -> list[Path]:
    directory = Path(directory)
    params_path = directory / "truth_params.csv"
    units_path = directory / "truth_units.csv"
    with params_path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["parameter", "value"])
        for key, value in _flatten(truth.params.as_dict()):
            w.writerow([key, value])
    with units_path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["unit", "alpha", "wri", "err_code", "err", "effective_rho"])
        for row in zip(truth.units, truth.alpha, truth.wri, truth.regime, truth.err, truth.effective_rho):
            u, a, wri, code, err, rho = row
            w.writerow([u, format_decimal(a), format_decimal(wri), int(code),
                        format_decimal(err), format_decimal(rho)])
    inst_path = directory / "institutions.csv"
    write_institutions(truth.institutions(), inst_path)
    return [params_path, units_path, inst_path]


def _flatten(d: dict, prefix: str = ""):
    for key in d:
        value = d[key]
        name = f"{prefix}{key}"
        if isinstance(value, dict):
            yield from _flatten(value, name + ".")
        elif isinstance(value, (list, tuple)):
            yield name, " ".join(_fmt(v) for v in value)
        else:
            yield name, _fmt(value)


def _fmt(v) -> str:
    if isinstance(v, float):
        return "" if math.isnan(v) else format_decimal(v)
    return "" if v is None else str(v)
