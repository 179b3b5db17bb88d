import math

import numpy as np
import pytest
from scipy import integrate

from surftrap.detection import (BRIGHT, DARK, DetectionModel, ThresholdTieError, analytic_curve,
                                analytic_error_model, calibrate, classify, draw_counts,
                                fidelity_curve, optimal_window, sample_photon_count)
from surftrap.rng import block_generator

NO_LEAKS = dict(depump_tau=math.inf, repump_tau=math.inf)


def _poisson_le1(lam):
    return math.exp(-lam) * (1 + lam)


def test_no_light_no_counts():
    m = DetectionModel(bright_rate=0, background_rate=0)
    counts = draw_counts(block_generator(0, "t"), BRIGHT, m, 1e-3, 1000)
    assert np.all(counts == 0)
    assert sample_photon_count(BRIGHT, m, 1e-3, seed=5) == 0


def test_dark_background_mean():
    m = DetectionModel(background_rate=200.0, **NO_LEAKS)
    c = draw_counts(block_generator(1, "t"), DARK, m, 1e-3, 100_000)
    assert abs(c.mean() - 0.2) < 3 * math.sqrt(0.2 / c.size)


def test_bright_mean_without_depumping():
    m = DetectionModel(bright_rate=8000.0, background_rate=0.0, **NO_LEAKS)
    c = draw_counts(block_generator(2, "t"), BRIGHT, m, 1e-3, 100_000)
    assert abs(c.mean() - 8.0) < 3 * math.sqrt(8.0 / c.size)


def test_single_count_is_reproducible():
    m = DetectionModel()
    a = [sample_photon_count(BRIGHT, m, 1e-3, 7, shot=k) for k in range(5)]
    b = [sample_photon_count(BRIGHT, m, 1e-3, 7, shot=k) for k in range(5)]
    assert a == b


@pytest.mark.parametrize("count, state", [(1, DARK), (2, BRIGHT), (0, DARK), (40, BRIGHT)])
def test_classify_examples(count, state):
    assert classify(count, 1.5) == state


def test_classify_errors():
    with pytest.raises(ThresholdTieError):
        classify(2, 2.0)
    with pytest.raises(ValueError):
        classify(-1)
    np.testing.assert_array_equal(classify(np.array([0, 1, 2, 3])), [0, 0, 1, 1])


def test_model_validation():
    with pytest.raises(ValueError):
        DetectionModel(depump_tau=0.0)
    with pytest.raises(ValueError):
        DetectionModel(threshold=0.0)
    with pytest.raises(ValueError):
        fidelity_curve(DetectionModel(), [1e-3], 0, 0)


def test_ideal_detector():
    m = DetectionModel(bright_rate=1e4, background_rate=0.0, **NO_LEAKS)
    c = fidelity_curve(m, [1e-3, 2e-3], 100_000, 3)
    assert np.all(c.avg_fidelity > 0.999)


def test_calibrated_fidelity_at_one_millisecond():
    c = fidelity_curve(DetectionModel(), [1e-3], 100_000, 0)
    assert c.avg_fidelity[0] == pytest.approx(0.988, abs=0.004)


def test_analytic_without_leaks_is_closed_form():
    m = DetectionModel(bright_rate=5e3, background_rate=300.0, **NO_LEAKS)
    for w in (1e-4, 5e-4, 2e-3):
        eb, ed = analytic_error_model(m, w)
        assert eb == pytest.approx(_poisson_le1(5300.0 * w), rel=1e-12)
        assert ed == pytest.approx(1 - _poisson_le1(300.0 * w), rel=1e-12)


def test_dark_error_matches_poisson_cdf():
    m = DetectionModel(background_rate=500.0, **NO_LEAKS)
    shots = 100_000
    for w in (2e-4, 5e-4, 1e-3):
        c = fidelity_curve(m, [w], shots, 11)
        p = 1 - _poisson_le1(500.0 * w)
        assert abs(c.err_dark[0] - p) < 3 * math.sqrt(p * (1 - p) / shots)


def test_monte_carlo_agrees_with_analytic():
    m = DetectionModel()
    shots = 100_000
    windows = np.geomspace(1e-4, 3e-3, 10)
    c = fidelity_curve(m, windows, shots, 0)
    eb, ed = analytic_curve(m, windows)
    # sigma from the model probability: an all-correct MC point has zero sample error
    for mc, p in ((c.err_bright, eb), (c.err_dark, ed)):
        assert np.all(np.abs(mc - p) <= 3 * np.sqrt(p * (1 - p) / shots))


def test_bright_error_never_grows_with_window():
    # counts only accumulate, so P(count <= 1) can only fall, leaks or not
    for m in (DetectionModel(), DetectionModel(**NO_LEAKS)):
        eb, _ = analytic_curve(m, np.geomspace(5e-5, 5e-3, 40))
        assert np.all(np.diff(eb) <= 1e-15)


def test_dark_error_grows_with_window():
    _, ed = analytic_curve(DetectionModel(**NO_LEAKS), np.geomspace(5e-5, 5e-3, 40))
    assert np.all(np.diff(ed) >= 0)


def test_average_error_has_single_minimum():
    eb, ed = analytic_curve(DetectionModel(), np.geomspace(5e-5, 2e-2, 80))
    avg = 0.5 * (eb + ed)
    k = int(np.argmin(avg))
    assert 0 < k < avg.size - 1
    assert np.all(np.diff(avg[:k + 1]) < 0) and np.all(np.diff(avg[k:]) > 0)


def test_bright_limit_is_early_leak_probability():
    tau, r, w = 7.7e-3, 1e6, 1e-3
    m = DetectionModel(bright_rate=r, background_rate=0.0, depump_tau=tau, repump_tau=math.inf)
    eb, ed = analytic_error_model(m, w)
    f = lambda t: math.exp(-t / tau) / tau * _poisson_le1(r * t)
    leak_early, _ = integrate.quad(f, 0, w, points=[5 / r], limit=200)
    assert ed == 0.0
    assert eb == pytest.approx(leak_early, rel=1e-6)
    assert eb == pytest.approx(2 / (r * tau), rel=1e-2)


def test_threshold_one_and_a_half_is_optimal():
    errs = {}
    for thr in (0.5, 1.5, 2.5, 3.5, 4.5):
        eb, ed = analytic_error_model(DetectionModel(threshold=thr), 1e-3)
        errs[thr] = 0.5 * (eb + ed)
    assert min(errs, key=errs.get) == 1.5


def test_calibration_reproduces_defaults():
    cal, d = calibrate(), DetectionModel()
    assert cal.background_rate == pytest.approx(d.background_rate, rel=1e-4)
    assert cal.depump_tau == pytest.approx(d.depump_tau, rel=1e-4)
    w, err = optimal_window(d)
    assert w == pytest.approx(1e-3, rel=1e-3)
    assert err == pytest.approx(0.012, abs=1e-5)


def test_depumping_dominates_bright_error():
    eb, ed = analytic_error_model(DetectionModel(), 1e-3)
    assert eb > ed


def test_worker_count_does_not_change_results():
    windows = [2e-4, 1e-3, 2e-3]
    a = fidelity_curve(DetectionModel(), windows, 10_000, 42, workers=1)
    b = fidelity_curve(DetectionModel(), windows, 10_000, 42, workers=3)
    np.testing.assert_array_equal(a.err_bright, b.err_bright)
    np.testing.assert_array_equal(a.err_dark, b.err_dark)
