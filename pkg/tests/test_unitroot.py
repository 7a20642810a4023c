import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bubblekit import DataError, NumericError
from bubblekit.unitroot import (SCAN_SPEC, AdfSpec, BSADFDetector, CriticalValueTable, adf_test, breusch_pagan,
                                date_stamp, exuberance_scan, kpss_test, mc_critical_values, min_window,
                                scan_statistics, simulate_null_path, window_size)


def _adf0(w):
    """Textbook Dickey-Fuller t-ratio with a constant and no lagged differences."""
    dy = np.diff(w)
    X = np.column_stack([w[:-1], np.ones(dy.shape[0])])
    XtX_inv = np.linalg.inv(X.T @ X)
    b = XtX_inv @ X.T @ dy
    e = dy - X @ b
    s2 = e @ e / (dy.shape[0] - 2)
    return b[0] / np.sqrt(s2 * XtX_inv[0, 0])


def _ar1(rng, n, phi, burn=50):
    e = rng.normal(size=n + burn)
    y = np.empty(n + burn)
    y[0] = e[0]
    for t in range(1, n + burn):
        y[t] = phi * y[t - 1] + e[t]
    return y[burn:]


# ---------------------------------------------------------------- ADF


def test_adf_matches_closed_form(rng):
    for _ in range(10):
        y = np.cumsum(rng.normal(size=120))
        r = adf_test(y, AdfSpec("constant", "fixed", 0))
        assert r.statistic == pytest.approx(_adf0(y), abs=1e-10)
        assert r.lag == 0 and r.nobs == 119


@pytest.mark.parametrize("det, reg", [("none", "n"), ("constant", "c"), ("trend", "ct")])
def test_adf_matches_statsmodels(rng, det, reg):
    from statsmodels.tsa.stattools import adfuller
    y = np.cumsum(rng.normal(size=200))
    ours = adf_test(y, AdfSpec(det, "fixed", 3))
    ref = adfuller(y, maxlag=3, regression=reg, autolag=None)
    assert ours.statistic == pytest.approx(ref[0], abs=1e-9)
    for lvl, key in ((0.01, "1%"), (0.05, "5%"), (0.10, "10%")):
        assert ours.critical_values[lvl] == pytest.approx(ref[4][key], abs=1e-3)


def test_adf_bic_lag_within_bounds(rng):
    y = _ar1(rng, 300, 0.5)
    r = adf_test(y, AdfSpec("constant", "bic", None))
    assert 0 <= r.lag <= AdfSpec().max_lag(300)


def test_adf_size_random_walk():
    keep = 0
    for seed in range(200):
        y = np.cumsum(np.random.default_rng(seed).normal(size=200))
        keep += not adf_test(y, AdfSpec("constant")).reject[0.05]
    assert keep >= 180


def test_adf_power_ar1():
    hits = sum(adf_test(_ar1(np.random.default_rng(seed), 300, 0.5), AdfSpec("constant")).reject[0.05]
               for seed in range(200))
    assert hits >= 180


def test_adf_right_tail_explosive():
    r = np.random.default_rng(5)
    y = np.empty(200)
    y[0] = 1.0
    for t in range(1, 200):
        y[t] = 1.05 * y[t - 1] + r.normal()
    res = adf_test(y, AdfSpec("constant", "fixed", 0), tail="right", cv_reps=500)
    assert res.statistic > 0
    assert res.reject[0.05]


def test_adf_errors():
    with pytest.raises(DataError, match="too short"):
        adf_test(np.arange(8.0), AdfSpec("constant", "fixed", 0))
    with pytest.raises(DataError, match="deterministic"):
        AdfSpec("quadratic")
    with pytest.raises(DataError, match="lag order"):
        AdfSpec("constant", "fixed", -1)
    with pytest.raises(NumericError):
        adf_test(np.ones(50), AdfSpec("constant", "fixed", 0))


# ---------------------------------------------------------------- KPSS


@pytest.mark.parametrize("det, reg", [("level", "c"), ("trend", "ct")])
def test_kpss_matches_statsmodels(rng, det, reg):
    from statsmodels.tsa.stattools import kpss
    y = np.cumsum(rng.normal(size=150)) * 0.1 + rng.normal(size=150)
    ours = kpss_test(y, det, lags=5)
    with pytest.warns(Warning):
        ref = kpss(y, regression=reg, nlags=5)
    assert ours.statistic == pytest.approx(ref[0], rel=1e-10)


def test_kpss_default_bandwidth(rng):
    assert kpss_test(rng.normal(size=500)).lags == int(np.floor(4 * (500 / 100) ** 0.25))


def test_kpss_critical_values_near_asymptotic():
    # bundled simulation against the published asymptotic 5% points
    cv = kpss_test(np.random.default_rng(0).normal(size=100)).critical_values
    assert cv[0.05] == pytest.approx(0.463, abs=0.02)
    cv = kpss_test(np.random.default_rng(0).normal(size=100), "trend").critical_values
    assert cv[0.05] == pytest.approx(0.146, abs=0.01)


def test_kpss_size_white_noise():
    keep = sum(not kpss_test(np.random.default_rng(s).normal(size=500)).reject[0.05] for s in range(200))
    assert keep >= 180


def test_kpss_power_random_walk():
    hits = sum(kpss_test(np.cumsum(np.random.default_rng(s).normal(size=500))).reject[0.05] for s in range(200))
    assert hits >= 180


def test_kpss_trend_stationary():
    t = np.arange(300.0)
    keep = sum(not kpss_test(2 + 0.05 * t + np.random.default_rng(s).normal(size=300), "trend").reject[0.05]
               for s in range(200))
    assert keep >= 180


def test_kpss_errors():
    with pytest.raises(DataError, match="20"):
        kpss_test(np.arange(10.0))
    with pytest.raises(NumericError, match="long-run variance"):
        kpss_test(np.full(50, 3.0))


# ---------------------------------------------------------------- Breusch-Pagan


def test_bp_matches_statsmodels(rng):
    from statsmodels.stats.diagnostic import het_breuschpagan
    Z = rng.normal(size=(200, 2))
    e = rng.normal(size=200) * (1 + np.abs(Z[:, 0]))
    ours = breusch_pagan(e, Z)
    ref = het_breuschpagan(e, np.column_stack([np.ones(200), Z]))
    assert ours[0] == pytest.approx(ref[0], rel=1e-10)
    assert ours[1] == pytest.approx(ref[1], rel=1e-8)


def _bp_rate(hetero, seeds):
    hits = 0
    for s in range(seeds):
        r = np.random.default_rng(s)
        x = r.uniform(1, 3, size=500)
        u = r.normal(size=500) * (x if hetero else 1.0)
        y = 1 + 2 * x + u
        X = np.column_stack([np.ones(500), x])
        e = y - X @ np.linalg.lstsq(X, y, rcond=None)[0]
        hits += breusch_pagan(e, x[:, None])[1] < 0.05
    return hits / seeds


def test_bp_size():
    assert abs(_bp_rate(False, 500) - 0.05) <= 0.02


def test_bp_power():
    assert _bp_rate(True, 200) >= 0.8


def test_bp_zero_residuals():
    with pytest.raises(DataError, match="zero"):
        breusch_pagan(np.zeros(20), np.arange(20.0)[:, None])


# ---------------------------------------------------------------- windows and scans


@pytest.mark.parametrize("T, r0", [(100, 0.19), (10_000, 0.028), (20, 0.5)])
def test_min_window(T, r0):
    assert min_window(T) == pytest.approx(r0, abs=1e-12)


def test_scan_definitional_collapse(rng):
    y = np.cumsum(rng.normal(size=100))
    s = scan_statistics(y)
    m0 = window_size(100, min_window(100))
    assert s.gsadf == s.bsadf.max()
    assert s.sadf == s.forward.max()
    assert s.bsadf[0] == pytest.approx(_adf0(y[:m0]), abs=1e-10)


def test_scan_matches_naive_oracle(rng):
    y = np.cumsum(rng.normal(size=60))
    s = scan_statistics(y)
    m0 = window_size(60, min_window(60))
    naive = [max(_adf0(y[r1:r2 + 1]) for r1 in range(r2 - m0 + 2)) for r2 in s.r2]
    np.testing.assert_allclose(s.bsadf, naive, atol=1e-10)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1), st.sampled_from([40, 70, 100]))
def test_gsadf_dominates_sadf(seed, T):
    s = scan_statistics(np.cumsum(np.random.default_rng(seed).normal(size=T)))
    assert s.gsadf >= s.sadf
    assert np.all(s.bsadf >= s.forward - 1e-12)


def test_date_stamp_rules():
    r2 = np.arange(10, 20)
    stat = np.array([0, 0, 2, 3, 1.5, 0, 0, 2, 2, 2.5])
    cv = np.ones(10)
    eps = date_stamp(r2, stat, cv)
    assert [(e.start, e.peak, e.end, e.closed) for e in eps] == [(12, 13, 15, True), (17, 19, 19, False)]
    assert date_stamp(r2, np.zeros(10), cv) == []


def test_episode_invariants_by_reevaluation():
    r = np.random.default_rng(2)
    y = np.empty(150)
    y[0] = 100
    for t in range(1, 150):
        y[t] = (1.04 if 60 <= t < 90 else 1.0) * y[t - 1] + r.normal() + (0.01 if t < 60 else 0)
    res = exuberance_scan(y, cv_reps=500, seed=1)
    assert res.gsadf >= res.sadf
    assert res.episodes
    idx = {int(v): i for i, v in enumerate(res.r2)}
    prev_end = -1
    for ep in res.episodes:
        i = idx[ep.start]
        assert res.bsadf[i] > res.cv[i]
        assert i == 0 or res.bsadf[i - 1] <= res.cv[i - 1]
        assert ep.start > prev_end and ep.start <= ep.peak <= ep.end
        prev_end = ep.end


def test_cv_table_properties():
    a = mc_critical_values("SADF", 60, reps=500, seed=3, use_cache=False)
    b = mc_critical_values("SADF", 60, reps=500, seed=3, use_cache=False)
    assert a.values == b.values
    assert a.values[0] <= a.values[1] <= a.values[2]
    bs = mc_critical_values("BSADF", 60, reps=500, seed=3)
    v = np.asarray(bs.values)
    assert np.all(np.diff(v, axis=0) >= 0)
    assert CriticalValueTable.from_json(bs.to_json()) == bs


def test_cv_table_worker_invariant():
    a = mc_critical_values("GSADF", 50, reps=500, seed=9, use_cache=False)
    b = mc_critical_values("GSADF", 50, reps=500, seed=9, workers=2, use_cache=False)
    assert a.values == b.values


def test_cv_table_precondition():
    with pytest.raises(DataError, match="500"):
        mc_critical_values("SADF", 100, reps=100)


def test_sadf_cv_against_independent_simulation():
    T = 100
    table = mc_critical_values("SADF", T, reps=2000, seed=0)
    m0 = window_size(T, min_window(T))
    r = np.random.default_rng(20240501)
    sadf = np.empty(2000)
    for i in range(2000):
        y = np.cumsum(1 / T + r.normal(size=T))
        sadf[i] = max(_adf0(y[:r2 + 1]) for r2 in range(m0 - 1, T))
    assert table.value(0.95) == pytest.approx(np.quantile(sadf, 0.95), abs=0.07)


def test_scan_cv_mismatch(rng):
    cv = mc_critical_values("BSADF", 60, reps=500, seed=0)
    with pytest.raises(DataError, match="does not match"):
        exuberance_scan(np.cumsum(rng.normal(size=80)), cv=cv)


def test_no_episode_below_cv(rng):
    y = np.cumsum(rng.normal(size=80))
    cv = mc_critical_values("BSADF", 80, reps=500, seed=0)
    high = CriticalValueTable("BSADF", 80, cv.r0, cv.levels, (np.asarray(cv.values) + 100).tolist(), 500, 0,
                              cv.spec)
    assert exuberance_scan(y, cv=high).episodes == []


def test_null_path_weak_drift():
    y = simulate_null_path(10_000, np.random.default_rng(0))
    assert np.mean(np.diff(y)) == pytest.approx(1e-4, abs=0.03)


def test_bsadf_estimator():
    r = np.random.default_rng(4)
    y = 100 + np.cumsum(r.normal(size=120))
    y[60:80] = y[59] * 1.03 ** np.arange(1, 21)
    det = BSADFDetector(cv_reps=500, seed=2).fit(y)
    labels = det.fit_predict(y)
    assert labels.shape == (120,)
    assert labels[60:80].any()
    assert det.get_params()["lags"] == 0 and SCAN_SPEC.k == 0
