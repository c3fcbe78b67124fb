import numpy as np
import pandas as pd

from inflpanel.report import (AR2_LABEL, HANSEN_LABEL, TableColumn, coefficient_cell, regression_table,
                              render_text, stars)
from inflpanel.results import EstimationResult, TestStatistic


def _result(estimator, coef, se, p_ar2=0.4, p_hansen=0.6):
    idx = list(coef)
    cov = pd.DataFrame(np.diag(np.square(list(se.values()))), index=idx, columns=idx)
    diag = {}
    if estimator == "gmm":
        diag = {"ar2": TestStatistic(0.5, p_ar2), "hansen": TestStatistic(3.0, p_hansen, 2)}
    return EstimationResult(estimator, pd.Series(coef, dtype=float), cov, pd.Series(dtype=float),
                            n_obs=100, n_units=10, r_squared=0.5 if estimator == "fe" else float("nan"),
                            diagnostics=diag)


def test_stars_thresholds():
    assert [stars(p) for p in (0.001, 0.01, 0.049, 0.05, 0.09, 0.1, float("nan"))] == \
        ["***", "**", "**", "*", "*", "", ""]


def test_cell_format():
    r = _result("fe", {"L.inflation": 2.0}, {"L.inflation": 0.001})
    assert coefficient_cell(r, "L.inflation") == "2.000*** (0.001)"
    assert coefficient_cell(r, "absent") == ""


def test_table_rows_and_labels():
    fe = _result("fe", {"L.inflation": 0.5, "gdp_growth": 0.1}, {"L.inflation": 0.1, "gdp_growth": 1.0})
    gmm = _result("gmm", {"L.inflation": 0.6, "L.inflation:wri": -0.1},
                  {"L.inflation": 0.2, "L.inflation:wri": 0.01})
    rows = regression_table([TableColumn("fe", "none", fe), TableColumn("gmm", "wri", gmm)])
    labels = [r[0] for r in rows]
    assert labels[3:6] == ["Lagged inflation", "Lagged inflation * WRI", "GDP growth"]
    assert labels[-5:] == ["Observations", "R-squared", "Number of units", AR2_LABEL, HANSEN_LABEL]
    assert rows[-2] == [AR2_LABEL, "", "0.400"]
    assert rows[-1] == [HANSEN_LABEL, "", "0.600"]
    assert rows[-4] == ["R-squared", "0.500", ""]
    text = render_text(rows)
    assert "0.600*** (0.200)" in text and "10%, 5% and 1%" in text
