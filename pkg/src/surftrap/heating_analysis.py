"""Sideband-amplitude thermometry, heating-rate fits and field-noise conversion."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import uniform_filter1d
from scipy.signal import find_peaks

from . import constants
from .constants import IonConstants
from .cooling import HeatingProcess, heat
from .fitting import FitError, binomial_estimate, line_fit, weighted_linear_fit
from .spin_motion import Branch, MotionalDistribution, PulseSpec, flop_curve

SMOOTH_WINDOW = 5


class NoMaximumError(ValueError):
    """The sampled curve has no interior local maximum."""


class DegenerateSidebandsError(ValueError):
    """Red amplitude not below blue amplitude; no thermal estimate exists."""


@dataclass(frozen=True)
class Amplitude:
    value: float
    uncertainty: float
    position: float  # fractional sample index of the peak
    time: float | None = None
    center: int = 0  # sample the local fit window is centred on


@dataclass(frozen=True)
class SidebandAmplitudes:
    a_red: float
    a_blue: float
    sigma_red: float = 0.0
    sigma_blue: float = 0.0


@dataclass(frozen=True)
class NbarEstimate:
    nbar: float
    uncertainty: float


@dataclass(frozen=True)
class HeatingFit:
    rate: float  # quanta / s
    rate_uncertainty: float
    intercept: float
    intercept_uncertainty: float
    points: tuple[tuple[float, float, float], ...]


def extract_first_maximum(curve, shot_noise=None, times=None, window: int = SMOOTH_WINDOW) -> Amplitude:
    """Height of the first local maximum of a sampled Rabi curve.

    The curve is smoothed with a ``window``-sample moving average only to
    locate the first peak; the height comes from a weighted quadratic fit to
    the raw samples in the same window around that point, and its uncertainty
    from the fit covariance.
    """
    y = np.asarray(curve, dtype=float)
    if y.size < window + 2:
        raise NoMaximumError("too few samples")
    se = None if shot_noise is None else np.broadcast_to(np.asarray(shot_noise, float), y.shape)
    smooth = uniform_filter1d(y, window, mode="nearest")
    noise = 0.0 if se is None else float(np.median(se)) / math.sqrt(window)
    span = float(np.ptp(smooth))
    peaks, _ = find_peaks(smooth, prominence=max(2.0 * noise, 1e-6 * span, 1e-12))
    if peaks.size == 0:
        raise NoMaximumError("curve is monotone over the sampled window")
    i = int(peaks[0])
    fit, x = _local_quadratic(y, se, i, window)
    c, b, a = fit.params
    if a < 0:
        xv = float(np.clip(-b / (2 * a), x[0], x[-1]))
    else:
        xv = float(x[np.argmax(np.polyval([a, b, c], x))])
    return _evaluate(fit, i, xv, times)


def _local_quadratic(y, se, i, window):
    half = window // 2
    lo, hi = max(0, i - half), min(len(y), i + half + 1)
    if hi - lo < 3:
        raise NoMaximumError("peak too close to the edge of the sampled window")
    x = np.arange(lo, hi, dtype=float) - i
    design = np.column_stack([np.ones_like(x), x, x**2])
    sig = None if se is None else np.asarray(se)[lo:hi]
    return weighted_linear_fit(design, np.asarray(y, float)[lo:hi], sig), x


def _evaluate(fit, i, xv, times) -> Amplitude:
    grad = np.array([1.0, xv, xv**2])
    value = float(grad @ fit.params)
    # the vertex location also depends on the params, but its first-order
    # effect on the value vanishes at a stationary point
    unc = float(math.sqrt(max(grad @ fit.cov @ grad, 0.0)))
    t = None
    if times is not None:
        tt = np.asarray(times, float)
        t = float(np.interp(i + xv, np.arange(tt.size), tt))
    return Amplitude(value, unc, i + xv, t, i)


def amplitude_at(curve, shot_noise, position: float, times=None, window: int = SMOOTH_WINDOW,
                 center: int | None = None) -> Amplitude:
    """Local quadratic estimate of ``curve`` at a fractional sample index,
    fitted on the window around ``center`` (default: nearest sample)."""
    y = np.asarray(curve, dtype=float)
    se = None if shot_noise is None else np.broadcast_to(np.asarray(shot_noise, float), y.shape)
    i = int(round(position)) if center is None else int(center)
    fit, _ = _local_quadratic(y, se, i, window)
    return _evaluate(fit, i, position - i, times)


def nbar_from_sidebands(amps: SidebandAmplitudes, bootstrap: int = 0, rng=None) -> NbarEstimate:
    """``nbar = a_red / (a_blue - a_red)`` with first-order error propagation,
    or a parametric bootstrap when ``bootstrap`` > 0."""
    ar, ab = amps.a_red, amps.a_blue
    if not ab > ar:
        raise DegenerateSidebandsError(f"a_blue={ab:.4g} must exceed a_red={ar:.4g}")
    d = ab - ar
    nbar = ar / d
    if bootstrap:
        rng = np.random.default_rng() if rng is None else rng
        r = rng.normal(ar, amps.sigma_red, bootstrap)
        b = rng.normal(ab, amps.sigma_blue, bootstrap)
        ok = b > r
        return NbarEstimate(nbar, float(np.std(r[ok] / (b[ok] - r[ok]), ddof=1)))
    unc = math.hypot(ab / d**2 * amps.sigma_red, ar / d**2 * amps.sigma_blue)
    return NbarEstimate(nbar, unc)


def fit_heating_rate(points) -> HeatingFit:
    """Straight-line fit of nbar against delay.

    ``points`` holds ``(delay_s, nbar, sigma)`` tuples.  When every sigma is
    positive the fit is weighted and the errors are absolute; otherwise it is
    unweighted with residual-scaled errors.
    """
    pts = [tuple(map(float, p)) if len(p) == 3 else (float(p[0]), float(p[1]), 0.0) for p in points]
    t = np.array([p[0] for p in pts])
    nb = np.array([p[1] for p in pts])
    sig = np.array([p[2] for p in pts])
    if np.unique(t).size < 2:
        raise FitError("need at least two distinct delays")
    fit = line_fit(t, nb, sig if np.all(sig > 0) else None)
    (c, m), (dc, dm) = fit.params, fit.errors
    return HeatingFit(float(m), float(dm), float(c), float(dc), tuple(pts))


def electric_field_psd(rate: float, ion: IonConstants) -> tuple[float, float]:
    """Field-noise spectral density ``S_E = 4 m hbar w ndot / q^2`` (V^2/m^2/Hz)
    and the product ``w S_E`` (V^2/m^2)."""
    s_e = 4 * ion.mass * constants.HBAR * ion.mode_frequency * rate / ion.charge**2
    return s_e, ion.mode_frequency * s_e


@dataclass(frozen=True)
class SidebandProbe:
    """Pulse parameters and time grid used to record red/blue flop curves."""

    omega0: float = 2 * math.pi * 150e3
    eta: float = 0.1
    t_max: float = 120e-6
    points: int = 61
    contrast: float = 1.0

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.t_max, self.points)

    def pulse(self, branch) -> PulseSpec:
        return PulseSpec(Branch.parse(branch), self.omega0, self.eta)


@dataclass(frozen=True)
class SidebandScan:
    times: np.ndarray
    red: np.ndarray
    blue: np.ndarray
    red_se: np.ndarray | None
    blue_se: np.ndarray | None
    amplitudes: SidebandAmplitudes
    estimate: NbarEstimate


def measure_nbar(dist: MotionalDistribution, probe: SidebandProbe = SidebandProbe(),
                 shots: int = 0, rng: np.random.Generator | None = None,
                 aligned: bool = True) -> SidebandScan:
    """Record red and blue flop curves and apply the sideband-ratio estimator.

    ``shots == 0`` uses the exact probabilities; otherwise each time point is
    a binomial sample of ``shots`` projective measurements.
    """
    t = probe.times
    curves = {}
    for branch in (Branch.RED, Branch.BLUE):
        p = np.clip(flop_curve(dist, probe.pulse(branch), t, probe.contrast), 0.0, 1.0)
        if shots:
            k = rng.binomial(shots, p)
            curves[branch] = binomial_estimate(k, shots)
        else:
            curves[branch] = (p, None)
    (red, red_se), (blue, blue_se) = curves[Branch.RED], curves[Branch.BLUE]
    a_blue = extract_first_maximum(blue, blue_se, t)
    if aligned:
        # thermal red/blue curves are proportional, so their first maxima
        # coincide; a near-empty red curve has no resolvable peak of its own
        a_red = amplitude_at(red, red_se, a_blue.position, t, center=a_blue.center)
    else:
        a_red = extract_first_maximum(red, red_se, t)
    amps = SidebandAmplitudes(a_red.value, a_blue.value, a_red.uncertainty, a_blue.uncertainty)
    return SidebandScan(t, red, blue, red_se, blue_se, amps, nbar_from_sidebands(amps))


def heating_points(start: MotionalDistribution, process: HeatingProcess, delays,
                   probe: SidebandProbe = SidebandProbe(), shots: int = 500,
                   rng: np.random.Generator | None = None):
    """Heat for each delay, measure nbar, return ``(delay, nbar, sigma)`` rows."""
    rows = []
    for delay in delays:
        dist = heat(start, float(delay), process)
        est = measure_nbar(dist, probe, shots, rng).estimate
        rows.append((float(delay), est.nbar, est.uncertainty))
    return rows
