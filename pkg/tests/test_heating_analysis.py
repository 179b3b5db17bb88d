import math

import numpy as np
import pytest

from surftrap.constants import IonConstants
from surftrap.cooling import CoolingSchedule, HeatingProcess, doppler_cool, sideband_cool
from surftrap.fitting import FitError, binomial_estimate
from surftrap.heating_analysis import (DegenerateSidebandsError, NoMaximumError, SidebandAmplitudes,
                                       SidebandProbe, electric_field_psd, extract_first_maximum,
                                       fit_heating_rate, heating_points, measure_nbar,
                                       nbar_from_sidebands)
from surftrap.rng import block_generator
from surftrap.spin_motion import flop_curve, thermal_distribution

PROBE = SidebandProbe()
DELAYS = [0.0, 0.25e-3, 0.5e-3, 1e-3]


def _dense_first_maximum(dist, branch):
    tt = np.linspace(0, PROBE.t_max, 200001)
    y = flop_curve(dist, PROBE.pulse(branch), tt)
    i = int(np.argmax(np.diff(np.sign(np.diff(y))) < 0)) + 1
    return y[i]


def test_noiseless_sine_peak_is_one():
    t = np.linspace(0, 1.6, 81)
    a = extract_first_maximum(np.sin(math.pi * t) ** 2, None, t)
    assert a.value == pytest.approx(1.0, abs=1e-4)
    assert a.time == pytest.approx(0.5, abs=1e-3)


def test_red_peak_matches_dense_grid():
    d = thermal_distribution(0.5)
    red = flop_curve(d, PROBE.pulse("red"), PROBE.times)
    a = extract_first_maximum(red, None, PROBE.times)
    assert a.value == pytest.approx(_dense_first_maximum(d, "red"), rel=1e-3)


def test_monotone_curve_has_no_maximum():
    with pytest.raises(NoMaximumError):
        extract_first_maximum(np.linspace(0, 1, 30))


def test_shot_noise_coverage():
    d = thermal_distribution(0.5)
    blue = flop_curve(d, PROBE.pulse("blue"), PROBE.times)
    truth = _dense_first_maximum(d, "blue")
    hits = 0
    for seed in range(200):
        k = block_generator(seed, "coverage").binomial(500, blue)
        p, se = binomial_estimate(k, 500)
        a = extract_first_maximum(p, se, PROBE.times)
        hits += abs(a.value - truth) <= 3 * a.uncertainty
    assert hits / 200 >= 0.95


@pytest.mark.parametrize("red, blue, nbar", [(0.0, 0.8, 0.0), (0.2, 0.6, 0.5), (0.4, 0.8, 1.0)])
def test_sideband_ratio_examples(red, blue, nbar):
    assert nbar_from_sidebands(SidebandAmplitudes(red, blue)).nbar == pytest.approx(nbar)


def test_degenerate_sidebands():
    with pytest.raises(DegenerateSidebandsError):
        nbar_from_sidebands(SidebandAmplitudes(0.5, 0.5))


def test_uncertainty_propagation_matches_numeric_derivative():
    amps = SidebandAmplitudes(0.2, 0.6, 0.01, 0.02)
    h = 1e-7
    f = lambda r, b: r / (b - r)
    dr = (f(0.2 + h, 0.6) - f(0.2 - h, 0.6)) / (2 * h)
    db = (f(0.2, 0.6 + h) - f(0.2, 0.6 - h)) / (2 * h)
    expected = math.hypot(dr * 0.01, db * 0.02)
    assert nbar_from_sidebands(amps).uncertainty == pytest.approx(expected, rel=1e-6)


def test_bootstrap_agrees_with_linear_for_small_errors():
    amps = SidebandAmplitudes(0.2, 0.6, 0.002, 0.003)
    lin = nbar_from_sidebands(amps).uncertainty
    boot = nbar_from_sidebands(amps, bootstrap=20000, rng=np.random.default_rng(3)).uncertainty
    assert boot == pytest.approx(lin, rel=0.05)


@pytest.mark.parametrize("nbar", [0.1, 0.5, 1.0, 4.5])
def test_noiseless_pipeline_recovers_nbar(nbar):
    est = measure_nbar(thermal_distribution(nbar), PROBE).estimate
    assert est.nbar == pytest.approx(nbar, rel=0.02)


def test_doppler_state_pipeline_self_consistency():
    est = measure_nbar(doppler_cool(4.5), PROBE).estimate
    assert est.nbar == pytest.approx(4.5, rel=0.02)


def test_fit_exact_line():
    pts = [(t, 0.5 + 800 * t, 0.05) for t in DELAYS]
    fit = fit_heating_rate(pts)
    assert fit.rate == pytest.approx(800)
    assert fit.intercept == pytest.approx(0.5)
    # unweighted exact data carry no residual scatter
    fit = fit_heating_rate([(t, 0.5 + 800 * t) for t in DELAYS])
    assert fit.rate_uncertainty == pytest.approx(0.0, abs=1e-9)


def test_fit_two_points():
    assert fit_heating_rate([(0.0, 1.0, 0.1), (1e-3, 2.0, 0.1)]).rate == pytest.approx(1000)


def test_fit_needs_distinct_delays():
    with pytest.raises(FitError):
        fit_heating_rate([(1e-3, 1.0, 0.1), (1e-3, 2.0, 0.1)])


def test_weighted_fit_error_matches_closed_form():
    t = np.array(DELAYS)
    sig = np.array([0.05, 0.06, 0.08, 0.1])
    fit = fit_heating_rate(list(zip(t, 0.4 + 800 * t, sig)))
    w = 1 / sig**2
    delta = w.sum() * (w * t**2).sum() - (w * t).sum() ** 2
    assert fit.rate_uncertainty == pytest.approx(math.sqrt(w.sum() / delta), rel=1e-9)


def test_single_pipeline_rate():
    start = sideband_cool(doppler_cool(4.5), CoolingSchedule()).measured
    pts = heating_points(start, HeatingProcess(800), DELAYS, PROBE, 500, block_generator(1, "heating_rate"))
    fit = fit_heating_rate(pts)
    assert fit.rate == pytest.approx(800, abs=100)
    assert fit.rate_uncertainty > 0


@pytest.mark.slow
def test_fitted_rate_is_unbiased():
    start = sideband_cool(doppler_cool(4.5), CoolingSchedule()).measured
    rates, sigmas = [], []
    for seed in range(200):
        pts = heating_points(start, HeatingProcess(800), DELAYS, PROBE, 500, block_generator(seed, "heating_rate"))
        fit = fit_heating_rate(pts)
        rates.append(fit.rate)
        sigmas.append(fit.rate_uncertainty)
    assert abs(np.mean(rates) - 800) < np.mean(sigmas)


def test_field_noise_zero_rate():
    assert electric_field_psd(0.0, IonConstants()) == (0.0, 0.0)


def test_field_noise_product():
    _, w_s = electric_field_psd(800, IonConstants(mode_frequency=2 * math.pi * 2.1e6))
    assert w_s == pytest.approx(6.3e-4, rel=0.1)


def test_field_noise_hand_calculation():
    # CODATA 2018 values typed in independently of the package
    hbar, e, u = 1.054571817e-34, 1.602176634e-19, 1.66053906660e-27
    m = 170.936323 * u - 9.1093837015e-31
    w = 2 * math.pi * 2.1e6
    hand = 4 * m * hbar * w * 800 / e**2
    s_e, _ = electric_field_psd(800, IonConstants(mode_frequency=w))
    assert hand == pytest.approx(4.8e-11, rel=0.1)
    assert s_e == pytest.approx(hand, rel=1e-5)


@pytest.mark.parametrize("field, factor, power", [("mass", 2.0, 1), ("mode_frequency", 3.0, 1), ("charge", 2.0, -2)])
def test_field_noise_scaling(field, factor, power):
    ion = IonConstants()
    base, _ = electric_field_psd(800, ion)
    kw = {field: getattr(ion, field) * factor}
    scaled, _ = electric_field_psd(800, IonConstants(**{**ion.__dict__, **kw}))
    assert scaled == pytest.approx(base * factor**power, rel=1e-12)
    assert electric_field_psd(1600, ion)[0] == pytest.approx(2 * base, rel=1e-12)
