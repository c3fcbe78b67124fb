from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np
import pandas as pd
from scipy import stats


class EstimationError(RuntimeError):
    """Rank deficiency, too few observations or an unidentified GMM problem."""


@dataclass(frozen=True)
class TestStatistic:
    __test__ = False  # not a pytest class

    statistic: float
    p_value: float
    dof: float | None = None
    note: str = ""


@dataclass(frozen=True)
class ArStatistic(TestStatistic):
    numerator: float = math.nan
    variance: float = math.nan


@dataclass
class EstimationResult:
    estimator: str
    coefficients: pd.Series
    covariance: pd.DataFrame
    residuals: pd.Series
    n_obs: int
    n_units: int
    r_squared: float | None = None
    r_squared_kind: str | None = None
    diagnostics: dict[str, TestStatistic] = field(default_factory=dict)
    # reference distribution for coefficient p-values: ("normal",) or ("t", dof)
    reference: tuple = ("normal",)
    metadata: dict[str, Any] = field(default_factory=dict)
    internals: Any = None

    @property
    def standard_errors(self) -> pd.Series:
        return pd.Series(np.sqrt(np.clip(np.diag(self.covariance.to_numpy()), 0, None)),
                         index=self.coefficients.index, name="se")

    @property
    def pvalues(self) -> pd.Series:
        z = (self.coefficients / self.standard_errors).to_numpy()
        if self.reference[0] == "t":
            p = 2 * stats.t.sf(np.abs(z), self.reference[1])
        else:
            p = 2 * stats.norm.sf(np.abs(z))
        return pd.Series(p, index=self.coefficients.index, name="p")

    def get(self, name: str, default: float = 0.0) -> float:
        return float(self.coefficients.get(name, default))


def symmetrize(matrix: np.ndarray) -> np.ndarray:
    return (matrix + matrix.T) / 2


def pinv(matrix: np.ndarray, rtol: float = 1e-10) -> np.ndarray:
    """Moore-Penrose inverse dropping singular values below ``rtol * s_max``."""
    return np.linalg.pinv(matrix, rcond=rtol)


def normal_p(z: float) -> float:
    return float(2 * stats.norm.sf(abs(z))) if math.isfinite(z) else math.nan
