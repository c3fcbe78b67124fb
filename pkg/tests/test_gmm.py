import math

import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from inflpanel.dgp import DgpParams, generate
from inflpanel.gmm import (GmmSpec, ar_test, build_instruments, build_system, effective_persistence,
                           fit_gmm, hansen_test)
from inflpanel.results import EstimationError, EstimationResult

from conftest import make_panel

BASE = GmmSpec("inflation", endogenous=("L.inflation", "L.inflation:wri"), exogenous=("import_prices",))


def ar1_panel(seed=0, n_units=40, n_periods=8, rho=0.5):
    data, _ = generate(DgpParams(n_units=n_units, n_periods=n_periods, rho0=rho, beta={}, seed=seed))
    return data


def test_instrument_columns_by_hand():
    rows = [("a", 2013 + t, float(v)) for t, v in enumerate([1, 4, 9, 16, 25])]
    data = make_panel(rows, ["y"])
    spec = GmmSpec("y", endogenous=("L.y",), time_effects=False, lag_min=2, lag_max=3)
    Z = build_instruments(data, spec)
    # differenced rows exist from 2015 (needs L.y at 2014 and 2013)
    assert list(Z.rows.get_level_values("year")) == [2015, 2016, 2017]
    np.testing.assert_array_equal(Z.values, [[1, 0], [4, 1], [9, 4]])
    assert Z.columns == ["L.y@L2", "L.y@L3"]


def test_uncollapsed_columns_sum_to_collapsed():
    data = ar1_panel()
    collapsed = build_instruments(data, GmmSpec("inflation", ("L.inflation",), time_effects=False))
    wide = build_instruments(data, GmmSpec("inflation", ("L.inflation",), time_effects=False,
                                           collapse=False))
    assert wide.count > collapsed.count
    for ell in (2, 3, 4):
        cols = [k for k, c in enumerate(wide.columns) if c.startswith(f"L.inflation@L{ell}[")]
        np.testing.assert_array_equal(wide.values[:, cols].sum(axis=1),
                                      collapsed.values[:, collapsed.columns.index(f"L.inflation@L{ell}")])


def test_lag_window_controls_instrument_count():
    data = ar1_panel(n_periods=10)
    counts = [build_instruments(data, GmmSpec("inflation", ("L.inflation",), time_effects=False,
                                              lag_max=m)).count for m in (2, 3, 4)]
    assert counts == [1, 2, 3]
    unbounded = build_instruments(data, GmmSpec("inflation", ("L.inflation",), time_effects=False,
                                                lag_max=None))
    assert unbounded.count == 8  # rows from year 3 to 10 reach back at most 8 years


def test_lag_window_beyond_span_is_an_error():
    data = ar1_panel(n_periods=4)
    with pytest.raises(EstimationError, match="lag"):
        fit_gmm(data, GmmSpec("inflation", ("L.inflation",), lag_min=5, lag_max=6))


def _dense_h(rows):
    n = len(rows)
    H = 2 * np.eye(n)
    for r in range(n - 1):
        if rows[r][0] == rows[r + 1][0] and rows[r + 1][1] == rows[r][1] + 1:
            H[r, r + 1] = H[r + 1, r] = -1
    return H


def _blocks(rows):
    units = [u for u, _ in rows]
    return [np.array([k for k, u in enumerate(units) if u == g]) for g in dict.fromkeys(units)]


def test_one_and_two_step_match_closed_form():
    data = generate(DgpParams(n_units=30, n_periods=8, rho0=0.4, rho1=-0.05, seed=2))[0]
    res = fit_gmm(data, BASE)
    system = res.internals.system
    X, y, Z = system.X, system.y, system.instruments.values
    rows = list(system.rows)
    H = _dense_h(rows)
    blocks = _blocks(rows)
    A1 = np.linalg.pinv(sum(Z[b].T @ H[np.ix_(b, b)] @ Z[b] for b in blocks))
    M = X.T @ Z @ A1 @ Z.T @ X
    b1 = np.linalg.solve(M, X.T @ Z @ A1 @ Z.T @ y)
    u1 = y - X @ b1
    S = sum(np.outer(Z[b].T @ u1[b], Z[b].T @ u1[b]) for b in blocks)
    A2 = np.linalg.pinv(S)
    b2 = np.linalg.solve(X.T @ Z @ A2 @ Z.T @ X, X.T @ Z @ A2 @ Z.T @ y)
    np.testing.assert_allclose(res.internals.one_step.beta, b1, rtol=1e-8, atol=1e-10)
    np.testing.assert_allclose(res.internals.two_step.beta, b2, rtol=1e-8, atol=1e-10)
    k = system.n_model_terms
    np.testing.assert_allclose(res.coefficients.to_numpy(), b2[:k], rtol=1e-8)


def test_windmeijer_matches_numerical_derivative():
    data = generate(DgpParams(n_units=30, n_periods=8, rho0=0.4, seed=4))[0]
    res = fit_gmm(data, BASE)
    it = res.internals
    system = it.system
    X, y, Z = system.X, system.y, system.instruments.values
    blocks = _blocks(list(system.rows))

    def two_step_from(b1):
        u = y - X @ b1
        S = sum(np.outer(Z[b].T @ u[b], Z[b].T @ u[b]) for b in blocks)
        A = np.linalg.pinv(S)
        return np.linalg.solve(X.T @ Z @ A @ Z.T @ X, X.T @ Z @ A @ Z.T @ y)

    b1 = it.one_step.beta
    K = len(b1)
    D = np.empty((K, K))
    for k in range(K):
        h = 1e-6 * max(1.0, abs(b1[k]))
        e = np.zeros(K)
        e[k] = h
        D[:, k] = (two_step_from(b1 + e) - two_step_from(b1 - e)) / (2 * h)
    V2 = it.uncorrected_covariance
    expected = V2 + D @ V2 + V2 @ D.T + D @ it.one_step.covariance @ D.T
    np.testing.assert_allclose(it.two_step.covariance, expected, rtol=1e-4, atol=1e-10)
    # the correction inflates the naive two-step variances here
    assert np.all(np.diag(it.two_step.covariance) >= np.diag(V2))


def test_exact_identification_gives_anderson_hsiao_ratio():
    data = ar1_panel(seed=3)
    spec = GmmSpec("inflation", ("L.inflation",), time_effects=False, lag_min=2, lag_max=2)
    res = fit_gmm(data, spec)
    one = fit_gmm(data, GmmSpec("inflation", ("L.inflation",), time_effects=False, lag_min=2,
                                lag_max=2, steps=1))
    s = data.series("inflation")
    f = pd.DataFrame({"y": s, "l1": s.groupby(level="unit").shift(1),
                      "l2": s.groupby(level="unit").shift(2)}).dropna()
    # instrument y[t-2] for the differenced lag y[t-1] - y[t-2]
    ratio = (f.l2 * (f.y - f.l1)).sum() / (f.l2 * (f.l1 - f.l2)).sum()
    assert res.coefficients["L.inflation"] == pytest.approx(ratio, rel=1e-10)
    assert one.coefficients["L.inflation"] == pytest.approx(ratio, rel=1e-10)
    hansen = res.diagnostics["hansen"]
    assert hansen.statistic == 0 and math.isnan(hansen.p_value) and hansen.note == "exactly identified"


def test_hansen_is_the_quadratic_form():
    data = generate(DgpParams(n_units=40, n_periods=9, rho0=0.5, seed=8))[0]
    res = fit_gmm(data, BASE)
    it = res.internals
    Z = it.system.instruments.values
    blocks = _blocks(list(it.system.rows))
    u1 = it.one_step.residuals
    S = sum(np.outer(Z[b].T @ u1[b], Z[b].T @ u1[b]) for b in blocks)
    g = Z.T @ it.two_step.residuals
    J = g @ np.linalg.pinv(S) @ g
    h = res.diagnostics["hansen"]
    assert h.statistic == pytest.approx(J, rel=1e-8)
    assert h.dof == Z.shape[1] - it.system.X.shape[1]
    assert hansen_test(it).statistic == h.statistic


def test_ar_numerator_is_hand_sum():
    data = ar1_panel(seed=6)
    data = data.select_units([u for u in data.units if u != "u007"])
    res = fit_gmm(data, GmmSpec("inflation", ("L.inflation",)))
    u = res.residuals
    for m in (1, 2):
        total = 0.0
        for (unit, year), value in u.items():
            if (unit, year - m) in u.index:
                total += value * u.loc[(unit, year - m)]
        assert ar_test(res.internals, m).numerator == pytest.approx(total, rel=1e-12)


def test_ar_test_without_overlap_raises():
    rows = [(u, 2013 + t, float(np.sin(3 * t + k))) for k, u in enumerate("abcdef") for t in range(4)]
    data = make_panel(rows, ["y"])
    res = fit_gmm(data, GmmSpec("y", ("L.y",), time_effects=False, lag_max=2))
    with pytest.raises(EstimationError):
        ar_test(res.internals, 2)
    assert "ar2" in res.diagnostics and math.isnan(res.diagnostics["ar2"].p_value)


def test_one_step_diagnostics_reported_alongside_two_step():
    res = fit_gmm(ar1_panel(seed=9), GmmSpec("inflation", ("L.inflation",)))
    assert {"ar1", "ar2", "ar1_onestep", "ar2_onestep", "hansen"} <= set(res.diagnostics)
    assert res.diagnostics["ar1"].statistic < 0


@given(st.floats(0.01, 100.0))
@settings(max_examples=15, deadline=None)
def test_scale_equivariance(c):
    data = generate(DgpParams(n_units=30, n_periods=8, rho0=0.5, seed=12))[0]
    spec = GmmSpec("inflation", ("L.inflation",), exogenous=("import_prices",))
    a = fit_gmm(data, spec)
    b = fit_gmm(data.with_columns(inflation=data.series("inflation") * c), spec)
    assert b.coefficients["L.inflation"] == pytest.approx(a.coefficients["L.inflation"], rel=1e-6)
    assert b.coefficients["import_prices"] == pytest.approx(c * a.coefficients["import_prices"], rel=1e-6)
    assert b.diagnostics["hansen"].statistic == pytest.approx(a.diagnostics["hansen"].statistic, rel=1e-6)


def test_unidentified_model_raises():
    data = ar1_panel()
    data = data.with_columns(const=data.series("inflation") * 0 + 1.0)
    with pytest.raises(EstimationError):
        fit_gmm(data, GmmSpec("inflation", ("L.inflation", "L.inflation:const", "L.inflation:const:const")))


def test_spec_validation():
    with pytest.raises(ValueError):
        GmmSpec("y", ("L.y",), lag_min=1)
    with pytest.raises(ValueError):
        GmmSpec("y", ("L.y",), lag_min=3, lag_max=2)
    with pytest.raises(ValueError):
        GmmSpec("y", ("L.y",), steps=3)
    assert GmmSpec("y", ("L.y",), steps="two").steps == 2


def test_effective_persistence_at_high_rigidity():
    coefs = pd.Series({"L.inflation": 3.729, "L.inflation:wri": -0.567, "L.inflation:err": -0.663})
    res = EstimationResult("gmm", coefs, pd.DataFrame(np.eye(3), index=coefs.index, columns=coefs.index),
                           residuals=pd.Series(dtype=float), n_obs=0, n_units=0)
    assert effective_persistence(res, wri=2.93, err=2) == pytest.approx(0.742, abs=5e-4)
    # absent interactions contribute nothing
    only = EstimationResult("gmm", coefs[:1], pd.DataFrame([[1.0]], index=coefs.index[:1],
                            columns=coefs.index[:1]), residuals=pd.Series(dtype=float), n_obs=0, n_units=0)
    assert effective_persistence(only, wri=5, err=3) == 3.729
