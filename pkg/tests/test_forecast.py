import math
from collections import Counter
from dataclasses import dataclass

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import signal, stats

from bubblekit import DataError
from bubblekit import forecast as fc
from bubblekit._kalman import StateSpace, kalman_filter, kalman_loglik, stationary_cov


def ar1(T, phi, seed, sigma=1.0):
    e = np.random.default_rng(seed).standard_normal(T + 200) * sigma
    return signal.lfilter([1.0], [1.0, -phi], e)[200:]


def companion(phi):
    # eigenvalues inside the unit circle <=> roots of 1 - phi_1 z - ... outside it
    C = np.zeros((phi.size, phi.size))
    C[0] = phi
    C[np.arange(1, phi.size), np.arange(phi.size - 1)] = 1.0
    return C


# --------------------------------------------------------------------------
# Kalman engine


def test_local_level_degenerate_filter():
    y = np.array([3.0, 5.0, -1.0, 7.0, 2.0])
    m = StateSpace(np.ones(1), np.ones((1, 1)), np.zeros((1, 1)), 0.0, np.zeros(1), 1e8 * np.ones((1, 1)), 1)
    res = kalman_filter(m, y)
    assert np.allclose(res.predictions[1:], y[0], rtol=0, atol=1e-6)
    assert res.a_next[0] == pytest.approx(y[0], abs=1e-6)


def _ar1_closed_form(y, phi, s2, mu):
    u = y - mu
    ll = stats.norm.logpdf(u[0], 0, math.sqrt(s2 / (1 - phi ** 2)))
    return ll + stats.norm.logpdf(u[1:], phi * u[:-1], math.sqrt(s2)).sum()


def test_ar1_loglik_matches_closed_form():
    rng = np.random.default_rng(0)
    for _ in range(50):
        phi, s2, mu = rng.uniform(-0.95, 0.95), rng.uniform(0.1, 5), rng.normal()
        y = mu + ar1(int(rng.integers(5, 300)), phi, int(rng.integers(1 << 30)), math.sqrt(s2))
        m = StateSpace(np.ones(1), np.array([[phi]]), np.array([[s2]]), 0.0, np.zeros(1),
                       np.array([[s2 / (1 - phi ** 2)]]))
        ll = kalman_loglik(m, y, np.full_like(y, mu)).loglik
        assert ll == pytest.approx(_ar1_closed_form(y, phi, s2, mu), abs=1e-8)


def test_prediction_variances_nonincreasing():
    T = np.array([[0.6, 1.0], [-0.2, 0.0]])
    R = np.array([1.0, 0.5])
    RQR = np.outer(R, R)
    m = StateSpace(np.array([1.0, 0.0]), T, RQR, 0.0, np.zeros(2), stationary_cov(T, RQR))
    F = kalman_filter(m, ar1(60, 0.3, 1)).F
    assert np.all(np.diff(F) <= 1e-12)
    assert F[-1] == pytest.approx(1.0, abs=1e-8)


# --------------------------------------------------------------------------
# orders and reparameterization


def test_order_validation_and_parse():
    assert fc.SarimaOrder.parse("1,1,0") == fc.SarimaOrder(1, 1, 0)
    assert fc.SarimaOrder.parse("(1,0,1)(0,1,1)[12]") == fc.SarimaOrder(1, 0, 1, 0, 1, 1, 12)
    assert str(fc.SarimaOrder(2, 1, 0, 1, 0, 0, 4)) == "(2,1,0)(1,0,0)[4]"
    for bad in (dict(d=2, D=1), dict(p=-1), dict(P=1, s=1)):
        with pytest.raises(DataError):
            fc.SarimaOrder(**bad)
    with pytest.raises(DataError):
        fc.SarimaOrder.parse("1,2")


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-4, 4), min_size=1, max_size=6))
def test_pacf_transform_is_stationary_and_invertible(x):
    phi = fc.constrain_pacf(np.array(x))
    assert np.all(np.abs(np.linalg.eigvals(companion(phi))) < 1)
    assert np.allclose(fc.unconstrain_pacf(phi), x, atol=1e-6)


# --------------------------------------------------------------------------
# SARIMA(X)


def test_ar1_consistency():
    ok = sum(abs(fc.fit_sarima(ar1(500, 0.7, s), fc.SarimaOrder(1, 0, 0)).ar[0] - 0.7) < 0.1 for s in range(200))
    assert ok / 200 >= 0.90


def test_sarimax_recovers_planted_beta():
    for s in range(20):
        rng = np.random.default_rng(100 + s)
        x = rng.standard_normal(500)
        y = 2.0 * x + ar1(500, 0.5, 200 + s)
        fit = fc.fit_sarima(y, fc.SarimaOrder(1, 0, 0), X=x[:, None])
        assert abs(fit.beta[1] - 2.0) < 0.15
        assert fit.exog_names == ["x1"]


def test_zero_exogenous_column_is_inert():
    y = ar1(200, 0.4, 3) + 1.0
    a = fc.fit_sarima(y, fc.SarimaOrder(1, 0, 1))
    b = fc.fit_sarima(y, fc.SarimaOrder(1, 0, 1), X=np.zeros((200, 2)))
    assert b.loglik == pytest.approx(a.loglik, abs=1e-8)
    assert np.all(b.beta[1:] == 0)


@pytest.mark.parametrize("order", [fc.SarimaOrder(1, 0, 0), fc.SarimaOrder(1, 0, 1), fc.SarimaOrder(2, 1, 1),
                                   fc.SarimaOrder(1, 0, 0, 1, 0, 1, 4)])
def test_gradient_vanishes_at_optimum(order):
    for s in range(3):
        y = np.cumsum(ar1(300, 0.5, s)) if order.d else ar1(300, 0.5, s)
        fit = fc.fit_sarima(y, order)
        assert fit.grad_norm < 1e-4
        ar, ma = fit.full_polynomials()
        for c in (ar, -ma):
            assert c.size == 0 or np.all(np.abs(np.linalg.eigvals(companion(c))) < 1)


@pytest.mark.parametrize("order", [fc.SarimaOrder(1, 0, 1), fc.SarimaOrder(1, 1, 0), fc.SarimaOrder(0, 1, 1, 0, 1, 1, 4)])
def test_forecast_equals_filter_prediction(order):
    y = np.cumsum(ar1(121, 0.3, 7)) if order.d else ar1(121, 0.3, 7)
    x = np.random.default_rng(8).standard_normal((121, 1))
    fit = fc.fit_sarima(y[:120], order, X=x[:120])
    mean, se = fit.forecast(1, x[120:])
    nxt = fit.apply(y, x)
    assert mean[0] == pytest.approx(nxt.fitted[120], abs=1e-10)
    assert se[0] == pytest.approx(math.sqrt(nxt.fitted_var[120]), abs=1e-10)


def test_differencing_consistency():
    for s in range(5):
        y = np.cumsum(ar1(300, 0.5, 30 + s))
        a = fc.fit_sarima(y, fc.SarimaOrder(1, 1, 1))
        b = fc.fit_sarima(np.diff(y), fc.SarimaOrder(1, 0, 1), include_mean=False)
        assert np.allclose(a.ar, b.ar, atol=1e-6) and np.allclose(a.ma, b.ma, atol=1e-6)
        assert a.loglik == pytest.approx(b.loglik, abs=1e-6)


def test_multi_step_forecast_of_random_walk():
    y = np.cumsum(np.random.default_rng(4).standard_normal(200))
    fit = fc.fit_sarima(y, fc.SarimaOrder(0, 1, 0))
    mean, se = fit.forecast(5)
    assert np.allclose(mean, y[-1])
    assert np.allclose(se, np.sqrt(fit.sigma2 * np.arange(1, 6)))


def test_sarima_errors():
    with pytest.raises(DataError):
        fc.fit_sarima(np.arange(10.0), fc.SarimaOrder(2, 0, 2))
    y = ar1(100, 0.5, 1)
    with pytest.raises(DataError):
        fc.fit_sarima(y, X=np.ones((99, 1)))
    x = np.random.default_rng(0).standard_normal(100)
    with pytest.raises(DataError):
        fc.fit_sarima(y, X=np.column_stack([x, 2 * x]))
    fit = fc.fit_sarima(y, X=x[:, None])
    with pytest.raises(DataError):
        fit.forecast(1)
    with pytest.raises(DataError):
        fit.forecast(0)


def test_fit_serializes():
    fit = fc.fit_sarima(ar1(100, 0.5, 1), fc.SarimaOrder(1, 0, 0))
    d = fit.to_dict()
    assert d["order"] == "(1,0,0)(0,0,0)[12]" and d["exog"] == ["mean"]
    assert np.isfinite(d["aicc"]) and d["aicc"] > fit.aic


# --------------------------------------------------------------------------
# order search


def test_auto_order_white_noise_modal():
    # reduced grid keeps the 100-seed search fast; the seasonal terms are covered below
    picks = Counter()
    for s in range(100):
        y = np.random.default_rng(s).standard_normal(120)
        order, _ = fc.auto_order(y, max_p=2, max_q=2, max_P=0, max_Q=0)
        picks[str(order)] += 1
    assert picks.most_common(1)[0][0] == "(0,0,0)(0,0,0)[12]"


def seasonal_walk(seed, n=240, s=12):
    rng = np.random.default_rng(seed)
    y = np.empty(n)
    y[:s] = 5 * np.sin(2 * np.pi * np.arange(s) / s)
    e = rng.standard_normal(n)
    for t in range(s, n):
        y[t] = y[t - s] + e[t]
    return y


def test_auto_order_detects_seasonal_unit_root():
    hits = sum(fc.auto_order(seasonal_walk(s), max_p=1, max_q=0, max_P=0, max_Q=0)[0].D == 1 for s in range(50))
    assert hits / 50 >= 0.80


def test_auto_order_singleton_grid():
    y = ar1(120, 0.5, 2)
    order, table = fc.auto_order(y, max_p=0, max_q=0, max_P=0, max_Q=0, d=0, D=0)
    assert order == fc.SarimaOrder() and len(table) == 1


def test_seasonal_strength_bounds():
    assert fc.seasonal_strength(seasonal_walk(1)) > 0.64
    assert fc.seasonal_strength(np.random.default_rng(1).standard_normal(240)) < 0.64
    assert fc.seasonal_strength(np.ones(10)) == 0.0


# --------------------------------------------------------------------------
# structural model


def test_structural_constant_series():
    y = np.full(60, 4.0)
    fit = fc.fit_structural(y)
    for v in (fit.var_obs, fit.var_level, fit.var_slope, fit.var_seasonal):
        assert v < 1e-6 * max(np.var(y), 1.0)
    mean, _ = fit.forecast(3)
    assert np.allclose(mean, 4.0)


def test_structural_seasonal_sums_to_zero():
    amp = 10.0
    for s in range(3):
        rng = np.random.default_rng(s)
        n = 240
        y = amp * np.sin(2 * np.pi * np.arange(n) / 12) + np.cumsum(0.1 * rng.standard_normal(n)) \
            + rng.standard_normal(n)
        fit = fc.fit_structural(y, fc.StructuralSpec(trend=True, seasonal=12, ar1=False))
        seas = fit.smoothed_states()[:, 2]
        sums = np.convolve(seas, np.ones(12), "valid")
        assert np.abs(sums).max() < 0.05 * amp


def test_structural_recovers_ar1():
    ok = 0
    for s in range(10):
        fit = fc.fit_structural(ar1(500, 0.7, s), fc.StructuralSpec(trend=True, seasonal=0))
        ok += abs(fit.phi - 0.7) < 0.15
        assert fit.var_slope < 1e-3 and fit.var_level < 1e-2
    assert ok >= 9


def test_structural_invariants_and_errors():
    fit = fc.fit_structural(ar1(80, 0.3, 5) + 10, fc.StructuralSpec(trend=False, seasonal=4))
    assert min(fit.var_obs, fit.var_level, fit.var_seasonal) >= 0 and abs(fit.phi) < 1
    assert fit.var_slope == 0.0
    assert set(fit.to_dict()) >= {"var_obs", "phi", "loglik"}
    with pytest.raises(DataError):
        fc.StructuralSpec(seasonal=1)
    with pytest.raises(DataError):
        fc.fit_structural(np.arange(20.0))


# --------------------------------------------------------------------------
# accuracy and DM


def test_accuracy_examples():
    a = np.array([1.0, 2.0, 3.0])
    assert fc.accuracy(a, a) == 0.0 and fc.accuracy(a, a, "rmse") == 0.0
    assert fc.smape([100.0], [50.0]) == pytest.approx(200 / 3, abs=1e-12)
    assert fc.rmse([3.0, 4.0], [0.0, 0.0]) == pytest.approx(5 / math.sqrt(2), abs=1e-15)
    with pytest.raises(DataError):
        fc.smape([0.0, 1.0], [0.0, 1.0])
    with pytest.raises(DataError):
        fc.accuracy(a, a, "MAE")
    with pytest.raises(DataError):
        fc.rmse(a, a[:2])


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.floats(0.1, 100), st.floats(0.1, 100)), min_size=1, max_size=20), st.floats(0.01, 100))
def test_smape_symmetric_and_scale_invariant(pairs, c):
    a, f = np.array(pairs).T
    assert fc.smape(a, f) == pytest.approx(fc.smape(f, a), rel=1e-12)
    assert fc.smape(c * a, c * f) == pytest.approx(fc.smape(a, f), rel=1e-9, abs=1e-9)


def test_dm_identical_losses():
    x = np.random.default_rng(0).random(30)
    res = fc.dm_test(x, x)
    assert (res.statistic, res.pvalue, res.note) == (0.0, 1.0, "identical losses")


def test_dm_size():
    rej = 0
    for s in range(1000):
        rng = np.random.default_rng(s)
        rej += fc.dm_test(rng.chisquare(1, 100), rng.chisquare(1, 100)).pvalue < 0.05
    assert abs(rej / 1000 - 0.05) <= 0.02


@pytest.mark.parametrize("h", [1, 3])
def test_dm_antisymmetry_and_sides(h):
    rng = np.random.default_rng(h)
    a, b = rng.random(50), rng.random(50) + 0.1
    ab, ba = fc.dm_test(a, b, h), fc.dm_test(b, a, h)
    assert ab.statistic == -ba.statistic
    one = fc.dm_test(a, b, h, "a-better")
    other = fc.dm_test(a, b, h, "b-better")
    assert one.pvalue + other.pvalue == pytest.approx(1.0, abs=1e-12)
    assert one.pvalue < 0.5 < other.pvalue
    assert 0 <= ab.pvalue <= 1


def test_dm_errors():
    with pytest.raises(DataError):
        fc.dm_test(np.ones(9), np.zeros(9))
    with pytest.raises(DataError):
        fc.dm_test(np.ones(10), np.zeros(11))
    with pytest.raises(DataError):
        fc.dm_test(np.ones(10), np.zeros(10), alternative="less")
    with pytest.raises(DataError):
        fc.dm_test(np.ones(10), np.zeros(10), h=0)


# --------------------------------------------------------------------------
# rolling evaluation


@dataclass
class Foresight:
    truth: np.ndarray
    name: str = "oracle"
    uses_x: bool = False

    def fit_forecast(self, y, X, x_next):
        return float(self.truth[len(y)]), 0.0


@dataclass
class Broken:
    name: str = "broken"
    uses_x: bool = False

    def fit_forecast(self, y, X, x_next):
        if len(y) > 45:
            raise DataError("boom")
        return 0.0, 1.0


def test_rolling_oracle_and_failure_isolation():
    y = 5 + ar1(50, 0.5, 1)
    paths = fc.rolling_one_step([Foresight(y), Broken(), fc.SarimaModel(order=fc.SarimaOrder(1, 0, 0))], y,
                                holdout=10)
    oracle, broken, sar = paths
    assert np.array_equal(oracle.index, np.arange(40, 50))
    assert fc.rmse(oracle.actual, oracle.forecast) == 0.0
    assert not broken.ok and "boom" in broken.error and len(broken.index) == 6
    assert sar.ok and len(sar.forecast) == 10
    table = fc.comparison_table(paths)
    assert table[0]["SMAPE"] == 0.0 and table[1]["SMAPE"] is None
    assert fc.paths_csv(paths).splitlines()[0] == "month,actual,forecast,se,model"
    dm = fc.dm_matrix(paths)
    assert {(r["model"], r["versus"]) for r in dm} == {("oracle", "SARIMA"), ("SARIMA", "oracle")}


def test_rolling_matches_direct_fits():
    y = 3 + ar1(60, 0.6, 2)
    p = fc.rolling_one_step([fc.SarimaModel(order=fc.SarimaOrder(1, 0, 0))], y, holdout=3)[0]
    for i, t in enumerate(range(57, 60)):
        mean, se = fc.fit_sarima(y[:t], fc.SarimaOrder(1, 0, 0)).forecast(1)
        assert p.forecast[i] == mean[0] and p.se[i] == se[0]


def test_rolling_workers_invariant():
    y = 3 + ar1(60, 0.6, 2)
    x = np.random.default_rng(3).standard_normal((60, 1))
    models = lambda: [fc.SarimaModel(order=fc.SarimaOrder(1, 0, 0)),
                      fc.SarimaModel("SARIMAX", fc.SarimaOrder(1, 0, 0), uses_x=True)]
    a = fc.rolling_one_step(models(), y, x, holdout=4)
    b = fc.rolling_one_step(models(), y, x, holdout=4, workers=2)
    assert fc.paths_csv(a) == fc.paths_csv(b)


def test_lag_mode_irrelevant_for_noise_regressor():
    diffs = []
    for s in range(100):
        rng = np.random.default_rng(s)
        y = 10 + ar1(80, 0.5, 1000 + s)
        x = rng.standard_normal((80, 1))
        out = []
        for mode in ("contemporaneous", "lagged"):
            m = fc.SarimaModel("X", fc.SarimaOrder(1, 0, 0), uses_x=True, refit=False)
            p = fc.rolling_one_step([m], y, x, holdout=20, lag_mode=mode)[0]
            out.append(fc.smape(p.actual, p.forecast))
        diffs.append(out[0] - out[1])
    assert stats.ttest_1samp(diffs, 0.0).pvalue > 0.1


def test_lag_exog_and_rolling_errors():
    X = np.arange(6.0).reshape(3, 2)
    lagged = fc.lag_exog(X, "lagged")
    assert np.isnan(lagged[0]).all() and np.array_equal(lagged[1:], X[:-1])
    with pytest.raises(DataError):
        fc.lag_exog(X, "lead")
    y = ar1(30, 0.5, 1)
    with pytest.raises(DataError):
        fc.rolling_one_step([Foresight(y)], y, holdout=1)
    with pytest.raises(DataError):
        fc.rolling_one_step([Foresight(y)], y, np.ones((29, 1)), holdout=5)
    p = fc.rolling_one_step([fc.SarimaModel("X", fc.SarimaOrder(), uses_x=True)], y, holdout=5)[0]
    assert not p.ok and "exogenous" in p.error
