import importlib.util
import math

import numpy as np
import pytest

from bubblekit import DataError, NumericError
from bubblekit.changepoint import (
    CpmConfig, KSChangePointDetector, KSChangePointMonitor, ThresholdTable, batch_detect,
    calibrate_thresholds, ks_two_sample, load_thresholds, max_split, mc_thresholds, monitor,
    null_statistic_matrix, run_length, segment_returns, split_statistics,
)
from bubblekit.ts import TimeSeries

from conftest import ROOT


def _fixture_module():
    spec = importlib.util.spec_from_file_location("make_fixture", ROOT / "scripts" / "make_fixture.py")
    mod = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(mod)
    return mod


def _ks_brute(a, b):
    grid = np.concatenate([a, b])
    fa = np.array([(a <= g).mean() for g in grid])
    fb = np.array([(b <= g).mean() for g in grid])
    return np.abs(fa - fb).max()


# --------------------------------------------------------------------------
# two-sample statistic


@pytest.mark.parametrize("a,b,d", [([1, 2, 3], [4, 5, 6], 1.0), ([1, 2, 3], [1, 2, 3], 0.0),
                                   ([1, 3], [2, 4], 0.5)])
def test_ks_examples(a, b, d):
    assert ks_two_sample(a, b) == d


def test_ks_matches_brute_force_and_scipy(rng):
    from scipy.stats import ks_2samp

    for _ in range(50):
        a = rng.integers(0, 6, rng.integers(1, 15)).astype(float)
        b = rng.integers(0, 6, rng.integers(1, 15)).astype(float)
        d = ks_two_sample(a, b)
        assert d == pytest.approx(_ks_brute(a, b), abs=1e-15)
        assert d == pytest.approx(ks_2samp(a, b).statistic, abs=1e-12)


def test_ks_symmetric_and_rank_invariant(rng):
    a, b = rng.normal(size=30), rng.normal(0.5, 1, size=20)
    d = ks_two_sample(a, b)
    assert ks_two_sample(b, a) == d
    assert ks_two_sample(np.exp(a), np.exp(b)) == d
    assert ks_two_sample(3 * a - 1, 3 * b - 1) == d
    assert 0 <= d <= 1


def test_ks_empty_raises():
    with pytest.raises(DataError):
        ks_two_sample([], [1.0])


def test_split_statistics_match_definition(rng):
    x = np.round(rng.normal(size=40), 1)  # ties included
    prof = split_statistics(x)
    n = x.size
    for k in range(1, n):
        ref = math.sqrt(k * (n - k) / n) * _ks_brute(x[:k], x[k:])
        assert prof[k] == pytest.approx(ref, abs=1e-12)
    s, k = max_split(x)
    assert s == pytest.approx(prof[2:].max(), abs=1e-12)
    assert prof[k] == pytest.approx(s, abs=1e-12)


# --------------------------------------------------------------------------
# batch test


def test_batch_planted_shift_location():
    hits = 0
    for seed in range(200):
        r = np.random.default_rng(seed)
        x = np.concatenate([r.normal(size=100), r.normal(3, 1, size=100)])
        res = batch_detect(x, reps=9, seed=seed)
        hits += 95 <= res.tau <= 105
    assert hits / 200 >= 0.90


def test_batch_size():
    rejections = sum(batch_detect(np.random.default_rng(s).normal(size=60), 0.05, reps=199, seed=s).significant
                     for s in range(500))
    assert abs(rejections / 500 - 0.05) <= 0.02


def test_batch_identical_blocks_not_significant():
    block = np.random.default_rng(11).normal(size=50)
    res = batch_detect(np.concatenate([block, block]), seed=1)
    assert not res.significant
    assert res.p_value > 0.5


def test_batch_errors_and_determinism():
    with pytest.raises(DataError):
        batch_detect([1, 2, 3, 4, 5])
    x = np.random.default_rng(2).normal(size=30)
    assert batch_detect(x, seed=4) == batch_detect(x, seed=4)


# --------------------------------------------------------------------------
# thresholds


@pytest.mark.parametrize("arl0", [100, 500, 1000, 5000])
def test_bundled_tables_sane(arl0):
    tab = load_thresholds(arl0)
    assert tab.arl0 == arl0 and tab.burn_in == 20 and tab.horizon >= 10_000
    active = tab.h[21:]
    assert np.all(np.isfinite(active)) and np.all(active > 0)
    assert np.all(np.isinf(tab.h[:21]))
    assert tab.reps >= 1000


def test_tables_ordered_in_arl0():
    hs = [load_thresholds(a).h[21:600] for a in (100, 500, 1000, 5000)]
    for lo, hi in zip(hs[:-1], hs[1:]):
        assert np.all(hi >= lo)


def test_table_json_round_trip():
    tab = load_thresholds(500)
    back = ThresholdTable.from_json(tab.to_json())
    assert np.array_equal(back.h, tab.h)


def test_mc_thresholds_deterministic_and_worker_invariant():
    cfg = CpmConfig(100)
    a = mc_thresholds(cfg, reps=1000, seed=3, calibration_horizon=80)
    b = mc_thresholds(cfg, reps=1000, seed=3, calibration_horizon=80, workers=2)
    assert a.to_json() == b.to_json()
    with pytest.raises(DataError):
        mc_thresholds(cfg, reps=999)


def test_calibration_hits_conditional_level():
    # on its own calibration sample each block keeps the survival level it targets
    D = null_statistic_matrix(2000, 60, seed=5)
    tab = calibrate_thresholds(D, arl0=100, burn_in=20)
    alive = np.ones(D.shape[0], bool)
    for t in range(21, 50):  # width-1 blocks
        exceed = D[alive, t] > tab.h[t]
        assert exceed.mean() <= 0.01 + 3 * math.sqrt(0.01 / alive.sum())
        alive[alive] = ~exceed


@pytest.mark.parametrize("dist", ["normal", "exponential"])
def test_arl_in_band(dist):
    tab = load_thresholds(500)
    r = np.random.default_rng(77)
    lengths = []
    for _ in range(300):
        x = getattr(r, dist)(size=10_000)
        n, _ = run_length(x, tab)
        assert n == -1 or n > 20
        lengths.append(n if n > 0 else x.size)
    assert 0.8 * 500 <= np.mean(lengths) <= 1.3 * 500


@pytest.mark.parametrize("arl0", [500, 1000])
def test_short_run_no_alarm_matches_geometric_hazard(arl0):
    # constant hazard 1/arl0 after burn-in: P(no alarm in n obs) = (1 - 1/arl0)^(n - 20)
    tab = load_thresholds(arl0)
    n, reps = arl0 // 5, 4000
    r = np.random.default_rng(arl0)
    quiet = np.mean([run_length(r.normal(size=n), tab)[0] < 0 for _ in range(reps)])
    p = (1 - 1 / arl0) ** (n - 20)
    assert abs(quiet - p) <= 3 * math.sqrt(p * (1 - p) / reps)


def test_short_run_no_alarm_rate_arl500():
    tab = load_thresholds(500)
    r = np.random.default_rng(999)
    quiet = np.mean([run_length(r.normal(size=100), tab)[0] < 0 for _ in range(20_000)])
    assert quiet >= 0.85


@pytest.mark.xfail(strict=True, reason="theoretical no-alarm rate for arl0=1000 over 200 obs is 0.835")
def test_short_run_no_alarm_rate_arl1000():
    tab = load_thresholds(1000)
    r = np.random.default_rng(999)
    quiet = np.mean([run_length(r.normal(size=200), tab)[0] < 0 for _ in range(4000)])
    assert quiet >= 0.85


# --------------------------------------------------------------------------
# monitor


def test_no_detection_before_burn_in():
    tab = load_thresholds(100)
    for seed in range(200):
        r = np.random.default_rng(seed)
        x = np.concatenate([r.normal(size=5), r.normal(50, 1, size=300)])
        for cp in monitor(x, CpmConfig(100), tab).change_points:
            assert cp.detected_at >= 20
    assert monitor(np.arange(20.0), CpmConfig(100), tab).change_points == []


def test_monitor_chunking_invariant(rng):
    x = np.concatenate([rng.normal(size=120), rng.normal(2, 1, size=120), rng.normal(size=120)])
    cfg = CpmConfig(100)
    whole = monitor(x, cfg).change_points
    mon = KSChangePointMonitor(cfg)
    for chunk in np.array_split(x, 17):
        mon.extend(chunk)
    assert mon.change_points == whole
    mon2 = KSChangePointMonitor(cfg)
    for v in x:
        mon2.update(v)
    assert mon2.change_points == whole


def test_monitor_statistic_matches_scratch(rng):
    x = np.concatenate([rng.normal(size=150), rng.normal(2, 1, size=150)])
    seg = monitor(x, CpmConfig(500))
    assert seg.change_points
    start = 0
    for cp in seg.change_points:
        window = x[start:cp.detected_at + 1]
        s, k = max_split(window)
        assert cp.statistic == pytest.approx(s, abs=1e-12)
        assert cp.tau == start + k - 1
        assert cp.statistic > cp.threshold
        start = cp.tau + 1


def test_segmentation_invariants(rng):
    x = np.concatenate([rng.normal(size=100), rng.normal(3, 1, size=100), rng.normal(0, 3, size=100)])
    seg = monitor(x, CpmConfig(100))
    taus = seg.taus
    assert taus == sorted(set(taus))
    for cp in seg.change_points:
        assert cp.tau < cp.detected_at and cp.delay > 0
    parts = seg.segments()
    assert sum(p["n"] for p in parts) == x.size
    assert parts[0]["first"] == 0 and parts[-1]["last"] == x.size - 1
    assert seg.to_csv().splitlines()[0] == "tau,boundary,detected,delay,statistic,threshold"


def test_three_regime_stream():
    # arl0 = 5000: over ~380 monitored steps, arl0 = 500 would leave only about
    # 0.998^380 = 47% of streams free of a false alarm
    cfg = CpmConfig(5000)
    tab = load_thresholds(5000)
    ok = 0
    for seed in range(200):
        r = np.random.default_rng(seed)
        x = np.concatenate([r.normal(size=150), r.normal(2, 1, size=150), r.normal(size=150)])
        t = monitor(x, cfg, tab).taus
        ok += len(t) == 2 and abs(t[0] - 149) <= 10 and abs(t[1] - 299) <= 10
    assert ok / 200 >= 0.80


def test_monitor_errors():
    with pytest.raises(DataError):
        KSChangePointMonitor(CpmConfig(500), load_thresholds(100))
    with pytest.raises(DataError):
        KSChangePointMonitor(CpmConfig(500)).update(float("nan"))
    with pytest.raises(DataError):
        CpmConfig(arl0=300)
    with pytest.raises(DataError):
        CpmConfig(burn_in=2)
    short = ThresholdTable(100, 20, [np.inf] * 21 + [1.5] * 10, 30, 1000, 0)
    with pytest.raises(NumericError):
        monitor(np.random.default_rng(0).normal(size=40), CpmConfig(100), short)


# --------------------------------------------------------------------------
# segmentation of price series


def test_segment_returns_regime_fixture(regimes_path):
    from bubblekit.ts import load_dataset

    ds = load_dataset(regimes_path)
    seg, labels = segment_returns(ds["price"])
    assert len(seg.taus) == 2
    assert len(labels.boundaries) == 2
    assert labels.labels == ("phase_1", "phase_2", "phase_3")


def test_segment_returns_modal_count_on_generator():
    gen = _fixture_module().regimes
    counts = [len(segment_returns(TimeSeries("p", 0, gen(seed)))[0].taus) for seed in range(200)]
    values, freq = np.unique(counts, return_counts=True)
    assert values[np.argmax(freq)] == 2


def test_segment_returns_random_walk_null():
    quiet = 0
    reps = 4000
    for seed in range(reps):
        r = np.random.default_rng(seed)
        p = 100 * np.exp(np.cumsum(np.r_[0.0, r.normal(0.005, 0.04, 99)]))
        seg, labels = segment_returns(TimeSeries("p", 0, p))
        quiet += not seg.taus
    assert quiet / reps >= 0.85


def test_segment_returns_dates_boundaries():
    r = np.random.default_rng(3)
    ret = np.concatenate([r.normal(0.02, 0.01, 60), r.normal(-0.03, 0.01, 60)])
    p = np.exp(np.r_[0.0, np.cumsum(ret)])
    seg, labels = segment_returns(TimeSeries("p", 24_000, p))
    assert seg.start == 24_001
    assert labels.boundaries == tuple(24_001 + t + 1 for t in seg.taus)
    with pytest.raises(DataError):
        segment_returns(TimeSeries("p", 0, np.r_[p[:30], -1.0]))


def test_detector_estimator():
    r = np.random.default_rng(8)
    x = np.concatenate([r.normal(size=100), r.normal(4, 1, size=100)])
    det = KSChangePointDetector(arl0=500)
    labels = det.fit_predict(x)
    assert det.change_points_ and labels[0] == 0 and labels[-1] == len(det.change_points_)
    assert det.get_params() == {"arl0": 500, "burn_in": 20}
