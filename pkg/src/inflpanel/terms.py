"""Regressor terms such as ``L.inflation:wri``.

A term is a product of dataset columns, optionally lagged as a whole:
``L2.x:z`` means ``(x * z)`` evaluated at ``t - 2``. GMM instruments for an
endogenous term are lagged levels of the same product, counted from ``t``,
so ``L.inflation`` with lags 2-4 is instrumented by inflation at
``t-2 .. t-4``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from functools import reduce

import pandas as pd

from .panel import PanelDataset, PanelError, shift

_TERM = re.compile(r"^(?:L(\d*)\.)?([^:\s]+(?::[^:\s]+)*)$")


@dataclass(frozen=True)
class Term:
    name: str
    factors: tuple[str, ...]
    lag: int = 0

    @classmethod
    def parse(cls, text: str) -> "Term":
        m = _TERM.match(text.strip())
        if not m:
            raise PanelError(f"cannot parse term {text!r}")
        lag_digits, body = m.groups()
        lag = 0 if lag_digits is None else int(lag_digits or 1)
        return cls(text.strip(), tuple(body.split(":")), lag)

    def product(self, data: PanelDataset) -> pd.Series:
        parts = [data.series(f) for f in self.factors]
        return reduce(lambda a, b: a * b, parts).rename(self.name)

    def evaluate(self, data: PanelDataset) -> pd.Series:
        base = self.product(data)
        return shift(base, self.lag).rename(self.name) if self.lag else base

    def level_at_lag(self, data: PanelDataset, ell: int) -> pd.Series:
        """The unlagged product at ``t - ell``."""
        return shift(self.product(data), ell).rename(f"{self.name}@t-{ell}")


def parse_terms(names) -> list[Term]:
    terms = [Term.parse(n) for n in names]
    seen = set()
    for t in terms:
        if t.name in seen:
            raise PanelError(f"term {t.name!r} listed twice")
        seen.add(t.name)
    return terms


def model_frame(data: PanelDataset, dependent: str, terms: list[Term]) -> pd.DataFrame:
    """Dependent variable and evaluated terms, one column each, on the full index."""
    cols = {dependent: data.series(dependent)}
    for t in terms:
        cols[t.name] = t.evaluate(data)
    return pd.DataFrame(cols, index=data.index)
