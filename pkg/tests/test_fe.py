import logging
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from inflpanel.fe import FeSpec, cluster_robust_covariance, fit_fe
from inflpanel.results import EstimationError

from conftest import make_panel


def small_panel(seed=0, n_units=3, n_years=4, drop=()):
    rng = np.random.default_rng(seed)
    rows = []
    for i in range(n_units):
        for t in range(n_years):
            if (i, t) in drop:
                continue
            x1, x2 = rng.normal(size=2)
            y = 1.5 * x1 - 0.7 * x2 + i + 0.3 * t + rng.normal(scale=0.5)
            rows.append((f"u{i}", 2013 + t, y, x1, x2))
    return make_panel(rows, ["y", "x1", "x2"])


def brute_force(data, regressors):
    """OLS with hand-built unit and year dummies via the normal equations."""
    frame = data.frame.dropna()
    units = sorted(set(frame.index.get_level_values("unit")))
    years = sorted(set(frame.index.get_level_values("year")))
    X = []
    for (u, y), row in frame.iterrows():
        line = [row[r] for r in regressors]
        line += [1.0 if u == v else 0.0 for v in units]
        line += [1.0 if y == s else 0.0 for s in years[1:]]
        X.append(line)
    X = np.array(X)
    yv = frame["y"].to_numpy()
    beta = np.linalg.solve(X.T @ X, X.T @ yv)
    return beta[: len(regressors)], X, yv - X @ beta, frame.index.get_level_values("unit")


def test_matches_dummy_ols_oracle():
    data = small_panel()
    res = fit_fe(data, FeSpec("y", ("x1", "x2")))
    beta, *_ = brute_force(data, ["x1", "x2"])
    np.testing.assert_allclose(res.coefficients.to_numpy(), beta, rtol=0, atol=1e-8)
    assert res.n_obs == 12 and res.n_units == 3


def test_unbalanced_panel_matches_oracle():
    data = small_panel(seed=3, n_units=5, n_years=6, drop={(0, 2), (3, 0), (4, 5)})
    res = fit_fe(data, FeSpec("y", ("x1", "x2")))
    beta, *_ = brute_force(data, ["x1", "x2"])
    np.testing.assert_allclose(res.coefficients.to_numpy(), beta, atol=1e-10)


def test_balanced_matches_two_way_demeaning():
    data = small_panel(seed=5, n_units=6, n_years=7)
    f = data.frame

    def demean(col):
        s = f[col]
        return (s - s.groupby(level="unit").transform("mean")
                - s.groupby(level="year").transform("mean") + s.mean()).to_numpy()

    Xd = np.column_stack([demean("x1"), demean("x2")])
    beta = np.linalg.lstsq(Xd, demean("y"), rcond=None)[0]
    res = fit_fe(data, FeSpec("y", ("x1", "x2")))
    np.testing.assert_allclose(res.coefficients.to_numpy(), beta, atol=1e-10)


def test_cluster_covariance_matches_loop_oracle():
    data = small_panel(seed=7, n_units=8, n_years=5)
    _, X, u, units = brute_force(data, ["x1", "x2"])
    n, p = X.shape
    bread = np.linalg.inv(X.T @ X)
    meat = np.zeros((p, p))
    for g in sorted(set(units)):
        s = (X[units == g] * u[units == g, None]).sum(axis=0)
        meat += np.outer(s, s)
    G = 8
    expected = G / (G - 1) * (n - 1) / (n - p) * bread @ meat @ bread
    np.testing.assert_allclose(cluster_robust_covariance(X, u, units), expected, rtol=1e-10)


def test_reported_standard_errors_use_nested_effect_count():
    data = small_panel(seed=7, n_units=8, n_years=5)
    res = fit_fe(data, FeSpec("y", ("x1", "x2")))
    _, X, u, units = brute_force(data, ["x1", "x2"])
    n, p = X.shape
    k = p - 8 + 1
    full = cluster_robust_covariance(X, u, units, n_params=k)
    np.testing.assert_allclose(res.covariance.to_numpy(), full[:2, :2], rtol=1e-8)
    assert res.metadata["small_sample_k"] == k


def test_residuals_sum_to_zero_within_units_and_years():
    res = fit_fe(small_panel(seed=2, n_units=4, n_years=6), FeSpec("y", ("x1", "x2")))
    r = res.residuals
    assert np.all(np.abs(r.groupby(level="unit").sum()) < 1e-10)
    assert np.all(np.abs(r.groupby(level="year").sum()) < 1e-10)


def test_exact_fit_recovers_coefficient():
    xs = np.random.default_rng(9).normal(size=(4, 5))
    rows = [(u, 2013 + t, 2.0 * xs[k, t] + k, xs[k, t]) for k, u in enumerate("abcd") for t in range(5)]
    res = fit_fe(make_panel(rows, ["y", "x"]), FeSpec("y", ("x",), time_effects=False))
    assert res.coefficients["x"] == pytest.approx(2.0, abs=1e-12)


def test_time_invariant_regressor_is_absorbed():
    rows = [(u, 2013 + t, float(t + k), float(k), float((t * 7 + k) % 5))
            for k, u in enumerate("abc") for t in range(4)]
    with pytest.raises(EstimationError, match="rank"):
        fit_fe(make_panel(rows, ["y", "w", "x"]), FeSpec("y", ("w", "x")))


def test_singleton_year_dropped_with_warning(caplog):
    data = small_panel(seed=1, n_units=4, n_years=5, drop={(1, 4), (2, 4), (3, 4)})
    with caplog.at_level(logging.WARNING):
        res = fit_fe(data, FeSpec("y", ("x1", "x2")))
    assert "2017" in caplog.text
    assert res.n_obs == 16


def test_lagged_dependent_and_within_r2():
    data = small_panel(seed=4, n_units=5, n_years=6)
    res = fit_fe(data, FeSpec("y", ("L.y", "x1")))
    assert res.n_obs == 25
    assert res.r_squared_kind == "within"
    assert 0 <= res.r_squared <= 1
    assert math.isfinite(res.standard_errors["L.y"])


@given(st.integers(0, 10_000), st.floats(0.1, 100))
@settings(max_examples=20, deadline=None)
def test_scaling_the_regressor_rescales_the_coefficient(seed, c):
    data = small_panel(seed=seed, n_units=4, n_years=5)
    scaled = data.with_columns(x1=data.series("x1") * c)
    a = fit_fe(data, FeSpec("y", ("x1", "x2")))
    b = fit_fe(scaled, FeSpec("y", ("x1", "x2")))
    assert b.coefficients["x1"] * c == pytest.approx(a.coefficients["x1"], rel=1e-7, abs=1e-9)
    assert b.pvalues["x1"] == pytest.approx(a.pvalues["x1"], rel=1e-6, abs=1e-12)
