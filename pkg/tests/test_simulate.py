import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bubblekit import DataError
from bubblekit import simulate as sm
from bubblekit._validation import rng_for
from bubblekit.unitroot import exuberance_scan


@pytest.fixture(scope="module")
def detector_settings():
    return sm.DetectorSettings(101, cv_reps=500, cv_seed=1)


# --------------------------------------------------------------------------
# EGARCH innovations


def test_egarch_constant_variance_when_dynamics_off():
    p = sm.EgarchParams(omega=-1.3, alpha=0.0, gamma=0.0, beta=0.0)
    e, h, z = sm.egarch_path(p, 200, seed=1, return_log_var=True)
    assert np.all(h == -1.3)
    assert np.allclose(e, np.exp(-0.65) * z, rtol=0, atol=1e-15)


def test_egarch_leverage_sign():
    e, h, z = sm.egarch_path(sm.EgarchParams(), 50_000, seed=2, return_log_var=True)
    assert np.corrcoef(z[:-1], h[1:])[0, 1] < 0


def test_egarch_recursion_oracle():
    p = sm.EgarchParams(omega=0.1, alpha=0.3, gamma=-0.2, beta=0.8)
    e, h, z = sm.egarch_path(p, 50, seed=3, return_log_var=True)
    ref = [p.omega / (1 - p.beta)]
    for t in range(1, 50):
        ref.append(p.omega + p.alpha * (abs(z[t - 1]) - math.sqrt(2 / math.pi)) + p.gamma * z[t - 1]
                   + p.beta * ref[-1])
    assert np.allclose(h, ref, rtol=0, atol=1e-12)
    assert np.allclose(e, np.exp(0.5 * np.array(ref)) * z, rtol=1e-14)


def test_egarch_deterministic_and_errors():
    p = sm.EgarchParams()
    assert np.array_equal(sm.egarch_path(p, 100, seed=9), sm.egarch_path(p, 100, seed=9))
    with pytest.raises(DataError):
        sm.EgarchParams(beta=1.0)
    with pytest.raises(DataError):
        sm.egarch_path(p, 0)


# --------------------------------------------------------------------------
# DGP


def test_default_config_matches_design():
    cfg = sm.DgpConfig()
    assert (cfg.T, cfg.y0, cfg.a, cfg.c1, cfg.c2) == (100, 100.0, 1.0, 1.0, 1.0)
    assert cfg.B == (40, 60)
    assert cfg.C == (61, 62)
    assert cfg.truth.as_tuple() == (40, 61, 62)
    assert cfg.delta > 1 > cfg.gamma
    smooth = sm.DgpConfig(pattern="smooth")
    assert smooth.C == (61, 80) and smooth.beta_x == 1.0


@pytest.mark.parametrize("kwargs", [dict(T=30), dict(pattern="slow"), dict(B=(0, 10)), dict(B=(40, 120)),
                                    dict(B=(40, 60), C=(62, 70)), dict(B=(), C=(10, 12)),
                                    dict(c1=-5.0, alpha_x=0.0)])
def test_config_validation(kwargs):
    with pytest.raises(DataError):
        sm.DgpConfig(**kwargs)


def test_config_dict_round_trip():
    cfg = sm.DgpConfig(pattern="disturbing", egarch=sm.EgarchParams(omega=-0.1), seed=4)
    back = sm.DgpConfig.from_dict(json.loads(json.dumps(cfg.to_dict())))
    assert back == cfg


def test_path_regime_law_exact():
    cfg = sm.DgpConfig(pattern="disturbing", seed=5)
    y, truth = sm.simulate_path(cfg)
    e = sm.egarch_path(cfg.egarch, cfg.T, np.random.default_rng(5))
    v = y.values
    assert len(y) == cfg.T + 1 and v[0] == cfg.y0
    for t in range(1, cfg.T + 1):
        if cfg.B[0] <= t <= cfg.B[1]:
            ref = cfg.delta * v[t - 1] + e[t - 1]
        elif cfg.C[0] <= t <= cfg.C[1]:
            ref = cfg.gamma * v[t - 1] + e[t - 1]
        else:
            ref = cfg.a * cfg.T ** -cfg.eta + v[t - 1] + e[t - 1]
        assert v[t] == pytest.approx(ref, abs=1e-12)
    assert truth.as_tuple() == (cfg.B[0], cfg.C[0], cfg.C[1])


def test_no_bubble_is_drifted_random_walk():
    cfg = sm.DgpConfig(T=10_000, eta=0.5, B=(), C=())
    y, truth = sm.simulate_path(cfg, np.random.default_rng(6))
    assert truth is None
    d = np.diff(y.values)
    drift = cfg.a * cfg.T ** -cfg.eta
    assert abs(d.mean() - drift) < 4 * d.std() / math.sqrt(d.size)


def test_simulate_deterministic():
    cfg = sm.DgpConfig(seed=12)
    assert np.array_equal(sm.simulate_path(cfg)[0].values, sm.simulate_path(cfg)[0].values)
    a = sm.simulate_path(cfg, rng_for(3, 1))[0].values
    b = sm.simulate_path(cfg, rng_for(3, 1))[0].values
    assert np.array_equal(a, b)


def test_explosive_regime_rises():
    cfg = sm.DgpConfig(B=(40, 60))
    ups = 0
    for s in range(500):
        v = sm.simulate_path(cfg, np.random.default_rng(s))[0].values
        ups += v[40:61].max() > v[39]
    assert ups / 500 >= 0.99


@settings(max_examples=60, deadline=None)
@given(st.floats(0.01, 10), st.floats(0.01, 3), st.floats(0.01, 10), st.floats(0.01, 3))
def test_roots_on_correct_side_of_unity(c1, ax, c2, bx):
    cfg = sm.DgpConfig(c1=c1, alpha_x=ax, c2=c2, beta_x=bx)
    assert cfg.delta > 1 and cfg.gamma < 1


# --------------------------------------------------------------------------
# scoring


def test_score_examples():
    truth = sm.PhaseTruth(40, 60, 75)
    assert sm.score(truth, truth, 1)
    assert not sm.score(None, truth, 5)
    rep = sm.PhaseTruth(45, 58, 80)
    assert sm.score(rep, truth, 5)
    assert not sm.score(rep, truth, 4)
    with pytest.raises(DataError):
        sm.score(rep, truth, 0)


@settings(max_examples=100, deadline=None)
@given(st.tuples(st.integers(0, 30), st.integers(31, 60), st.integers(61, 90)), st.integers(1, 20),
       st.integers(0, 20))
def test_score_monotone_in_window(rep, w, extra):
    truth = sm.PhaseTruth(20, 45, 70)
    if sm.score(sm.PhaseTruth(*rep), truth, w):
        assert sm.score(sm.PhaseTruth(*rep), truth, w + extra)


def test_phase_rmse_examples():
    t = sm.PhaseTruth(40, 60, 75)
    assert sm.phase_rmse([(t, t), (t, t)]) == 0.0
    assert sm.phase_rmse([(sm.PhaseTruth(43, 60, 75), t)]) == pytest.approx(math.sqrt(3), abs=1e-15)
    recs = [(sm.PhaseTruth(41, 58, 75), t), (sm.PhaseTruth(40, 61, 79), t)]
    assert sm.phase_rmse(recs) == pytest.approx(math.sqrt((1 + 4 + 0 + 0 + 1 + 16) / 6), abs=1e-15)
    with pytest.raises(DataError):
        sm.phase_rmse([])
    with pytest.raises(DataError):
        sm.PhaseTruth(10, 10, 20)


# --------------------------------------------------------------------------
# detector mapping


def test_flat_path_reports_none_in_modal_case(detector_settings):
    cfg = sm.DgpConfig(B=(), C=())
    none = {"BSADF": 0, "KS-CPM": 0}
    for s in range(200):
        path, _ = sm.simulate_path(cfg, rng_for(8, s))
        for m in none:
            none[m] += sm.detector_phases(m, path, detector_settings) is None
    assert none["BSADF"] > 100 and none["KS-CPM"] > 100


def test_cpm_recovers_planted_phases(detector_settings):
    cfg = sm.DgpConfig(B=(40, 59), C=(60, 75), pattern="smooth")
    ok = 0
    for s in range(500):
        path, truth = sm.simulate_path(cfg, rng_for(7, s))
        ok += sm.score(sm.detector_phases("KS-CPM", path, detector_settings), truth, 10)
    assert truth.as_tuple() == (40, 60, 75)
    assert ok / 500 > 0.5


def test_bsadf_single_episode_mapping(detector_settings):
    cfg = sm.DgpConfig(pattern="smooth")
    checked = 0
    for s in range(40):
        path, _ = sm.simulate_path(cfg, rng_for(9, s))
        res = exuberance_scan(path.values, detector_settings.r0, cv=detector_settings.bsadf_cv)
        if len(res.episodes) != 1:
            continue
        ep = res.episodes[0]
        rep = sm.detector_phases("BSADF", path, detector_settings)
        if ep.start < ep.peak < ep.end:
            assert rep.as_tuple() == (ep.start, ep.peak, ep.end)
        checked += 1
    assert checked >= 5


def test_detector_errors(detector_settings):
    path, _ = sm.simulate_path(sm.DgpConfig(T=60))
    with pytest.raises(DataError):
        sm.detector_phases("BSADF", path, detector_settings)
    path, _ = sm.simulate_path(sm.DgpConfig())
    with pytest.raises(DataError):
        sm.detector_phases("PSY", path, detector_settings)


# --------------------------------------------------------------------------
# study runner


def test_oracle_detector_is_perfect(detector_settings):
    res = sm.mc_study(patterns=("sudden",), reps=100, methods=("oracle",), settings=detector_settings,
                      detectors={"oracle": lambda path, truth: truth})
    r = res[("sudden", "oracle")]
    assert r.correctness == 1.0 and r.rmse == 0.0 and len(r.records) == 100


def test_study_deterministic_and_order_invariant(detector_settings):
    a = sm.mc_study(patterns=("disturbing",), reps=100, seed=4, settings=detector_settings)
    b = sm.mc_study(patterns=("disturbing",), reps=100, seed=4, settings=detector_settings, workers=2)
    for key in a:
        assert a[key].correctness == b[key].correctness
        assert a[key].rmse == b[key].rmse or (math.isnan(a[key].rmse) and math.isnan(b[key].rmse))
        assert 0 <= a[key].correctness <= 1
    csv_text = sm.study_csv(a, 5, 4, sm.DgpConfig())
    assert csv_text.splitlines()[0] == "pattern,method,reps,correctness,rmse,w,seed,dgp"
    assert len(csv_text.splitlines()) == 3


def test_study_rmse_uses_correct_subset_only(detector_settings):
    def wobbly(path, truth):
        f, b, d = truth.as_tuple()
        return sm.PhaseTruth(f + 2, b, d) if path.values[1] > path.values[0] else sm.PhaseTruth(f + 9, b, d)

    r = sm.mc_study(patterns=("sudden",), reps=100, methods=("w",), settings=detector_settings,
                    detectors={"w": wobbly})[("sudden", "w")]
    assert 0 < r.correctness < 1
    assert r.rmse == pytest.approx(math.sqrt(4 / 3), abs=1e-12)


def test_study_needs_reps():
    with pytest.raises(DataError):
        sm.mc_study(reps=99)
