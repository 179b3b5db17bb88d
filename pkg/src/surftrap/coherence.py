"""Ramsey and spin-echo experiments under correlated dephasing noise.

The qubit-oscillator detuning is the sum of a quasi-static Gaussian offset
(redrawn every shot) and a stationary Ornstein-Uhlenbeck process with
correlation time ``tau_c``.  The OU phase integral is sampled exactly: each
step draws the next detuning value and the integral over the step from
their joint Gaussian law.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import brentq, curve_fit

from .fitting import FitError, binomial_estimate, weighted_linear_fit
from .rng import BLOCK_SHOTS, block_generator, parallel_map

STEPS_PER_TAU = 50


@dataclass(frozen=True)
class DephasingModel:
    sigma_static: float = 0.0  # rad/s
    sigma_dynamic: float = 0.0  # rad/s
    tau_c: float = 1.0  # s
    pulse_infidelity: float = 0.0

    def __post_init__(self):
        if self.sigma_static < 0 or self.sigma_dynamic < 0:
            raise ValueError("noise amplitudes must be >= 0")
        if not self.tau_c > 0:
            raise ValueError("tau_c must be > 0")
        if not 0 <= self.pulse_infidelity <= 1:
            raise ValueError("pulse_infidelity must be a probability")


# Calibrated so that Gaussian fits over DEFAULT_DELAYS give T2 = 0.78 s
# (Ramsey) and 1.88 s (echo) for the microwave qubit, and 1.43 s (echo) for
# the Raman qubit.  These are fitted noise parameters, not measured spectra.
MICROWAVE = DephasingModel(sigma_static=1.1922470894581525, sigma_dynamic=1.723936500174028, tau_c=0.6)
RAMAN = DephasingModel(sigma_static=1.1922470894581525, sigma_dynamic=2.2980250287968373, tau_c=0.6)

# resonant microwave drive with a 0.1 ms pi time
MICROWAVE_RABI = math.pi / 1e-4

DEFAULT_DELAYS = np.linspace(0.1, 3.0, 30)


@dataclass(frozen=True)
class FringeResult:
    phases: np.ndarray
    p1: np.ndarray
    se: np.ndarray

    def visibility(self, signed: bool = False) -> tuple[float, float]:
        return fringe_visibility(self.phases, self.p1, self.se, signed)


@dataclass(frozen=True)
class CoherenceResult:
    delays: np.ndarray
    visibilities: np.ndarray
    errors: np.ndarray
    t2: float
    t2_uncertainty: float
    amplitude: float
    amplitude_uncertainty: float


def ou_step_coefficients(h: float, sigma: float, tau: float):
    """Exact one-step law of an OU process and its integral.

    Given the value ``x0`` at the start of a step of length ``h``, the value
    and the integral over the step are jointly Gaussian with means
    ``(a x0, b x0)`` and covariance ``[[vxx, vxi], [vxi, vii]]``.
    """
    e1 = math.exp(-h / tau)
    e2 = math.exp(-2 * h / tau)
    a = e1
    b = tau * (1 - e1)
    vxx = sigma**2 * (1 - e2)
    vii = sigma**2 * tau**2 * (2 * h / tau - 3 + 4 * e1 - e2)
    vxi = sigma**2 * tau * (1 - e1) ** 2
    return a, b, vxx, vii, vxi


def _ou_phases(rng, n, model: DephasingModel, segments):
    """Integral of the OU detuning over consecutive ``segments`` (durations)
    for ``n`` shots; returns an (n, len(segments)) array."""
    out = np.zeros((n, len(segments)))
    if model.sigma_dynamic == 0:
        return out
    x = rng.normal(0.0, model.sigma_dynamic, n)
    h_max = model.tau_c / STEPS_PER_TAU
    for k, seg in enumerate(segments):
        steps = max(1, math.ceil(seg / h_max)) if seg > 0 else 0
        if steps == 0:
            continue
        h = seg / steps
        a, b, vxx, vii, vxi = ou_step_coefficients(h, model.sigma_dynamic, model.tau_c)
        # Cholesky of the 2x2 step covariance
        l11 = math.sqrt(vxx)
        l21 = vxi / l11 if l11 > 0 else 0.0
        l22 = math.sqrt(max(vii - l21**2, 0.0))
        acc = np.zeros(n)
        for _ in range(steps):
            z1 = rng.standard_normal(n)
            z2 = rng.standard_normal(n)
            acc += b * x + l21 * z1 + l22 * z2
            x = a * x + l11 * z1
        out[:, k] = acc
    return out


def accumulated_phase(rng, n, model: DephasingModel, delay: float, echo: bool) -> np.ndarray:
    """Phase picked up during the free evolution; with ``echo`` the first
    half enters with opposite sign (refocusing pi pulse at the midpoint)."""
    static = rng.normal(0.0, model.sigma_static, n) if model.sigma_static > 0 else np.zeros(n)
    if echo:
        parts = _ou_phases(rng, n, model, [delay / 2, delay / 2])
        return parts[:, 1] - parts[:, 0]
    return static * delay + _ou_phases(rng, n, model, [delay])[:, 0]


def _fringe(delay, phases, model, shots, seed, echo, projective, workers):
    if delay < 0:
        raise ValueError("delay must be >= 0")
    phases = np.atleast_1d(np.asarray(phases, dtype=float))
    tag = "echo" if echo else "ramsey"
    n_pulses = 3 if echo else 2

    def run(job):
        j, block, size = job
        rng = block_generator(seed, f"{tag}/{delay!r}/{j}", block)
        phi = accumulated_phase(rng, size, model, delay, echo)
        # second pi/2 pulse about an axis at ``phase``; the echo pulse flips the sign
        # of the whole phase but the fringe is symmetric in it
        p1 = 0.5 * (1 + np.cos(phases[j] - phi))
        if model.pulse_infidelity > 0:
            keep = (1 - model.pulse_infidelity) ** n_pulses
            p1 = keep * p1 + (1 - keep) * 0.5
        if projective:
            return float((rng.random(size) < p1).sum())
        return float(p1.sum())

    jobs = [(j, blk, min(BLOCK_SHOTS, shots - blk * BLOCK_SHOTS))
            for j in range(phases.size) for blk in range(math.ceil(shots / BLOCK_SHOTS))]
    sums = np.array(parallel_map(run, jobs, workers)).reshape(phases.size, -1).sum(axis=1)
    if projective:
        p, se = binomial_estimate(sums, shots)
    else:
        p = sums / shots
        se = np.sqrt(np.clip(p * (1 - p), 0, None) / shots)
    return FringeResult(phases, p, se)


def ramsey_fringe(delay: float, phases, model: DephasingModel, shots: int, seed: int,
                  projective: bool = True, workers: int = 1) -> FringeResult:
    """pi/2 - delay - pi/2(phase).  ``projective`` records binary outcomes;
    otherwise the per-shot probabilities are averaged."""
    return _fringe(delay, phases, model, shots, seed, False, projective, workers)


def spin_echo_fringe(delay: float, phases, model: DephasingModel, shots: int, seed: int,
                     projective: bool = True, workers: int = 1) -> FringeResult:
    """pi/2 - delay/2 - pi - delay/2 - pi/2(phase)."""
    return _fringe(delay, phases, model, shots, seed, True, projective, workers)


def fringe_visibility(phases, p1, se=None, signed: bool = False) -> tuple[float, float]:
    """Fit ``c + a cos(phase) + b sin(phase)`` and return the contrast
    ``2 sqrt(a^2 + b^2)`` with the noise-induced bias of the squared amplitude
    removed, and its standard error.

    Once noise dominates, the debiased square can go negative.  By default the
    contrast is then 0; ``signed`` returns ``-2 sqrt(|.|)`` instead, which keeps
    the estimator unbiased near zero for downstream fitting.
    """
    phases = np.asarray(phases, float)
    design = np.column_stack([np.ones_like(phases), np.cos(phases), np.sin(phases)])
    fit = weighted_linear_fit(design, p1, se)
    _, a, b = fit.params
    va, vb = fit.cov[1, 1], fit.cov[2, 2]
    amp2 = a**2 + b**2 - (va + vb)
    amp = math.copysign(math.sqrt(abs(amp2)), amp2) if signed else math.sqrt(max(amp2, 0.0))
    raw = math.hypot(a, b)
    if raw > 0:
        var = (a**2 * va + b**2 * vb + 2 * a * b * fit.cov[1, 2]) / raw**2
    else:
        var = 0.5 * (va + vb)
    return min(2 * amp, 1.0), 2 * math.sqrt(max(var, 0.0, 0.5 * (va + vb)))


def rabi_drive(durations, omega0: float = MICROWAVE_RABI, shots: int = 0, model: DephasingModel | None = None,
               seed: int = 0, workers: int = 1) -> tuple[np.ndarray, np.ndarray]:
    """Resonant carrier flopping ``P1(t) = sin^2(omega0 t / 2)``.

    With a model, each shot carries a static detuning offset (generalized
    Rabi formula); ``shots > 0`` returns binomial estimates.
    """
    t = np.atleast_1d(np.asarray(durations, dtype=float))
    if shots <= 0:
        if model is None or model.sigma_static == 0:
            p = np.sin(omega0 * t / 2) ** 2
            return p, np.zeros_like(p)
        shots_eff = 20000
    else:
        shots_eff = shots
    model = model or DephasingModel()

    def run(block):
        rng = block_generator(seed, "rabi_drive", block)
        size = min(BLOCK_SHOTS, shots_eff - block * BLOCK_SHOTS)
        delta = rng.normal(0.0, model.sigma_static, size)[:, None] if model.sigma_static > 0 else 0.0
        gen = np.sqrt(omega0**2 + delta**2)
        p = (omega0**2 / gen**2) * np.sin(gen * t[None, :] / 2) ** 2 * np.ones((size, 1))
        if shots > 0:
            return (rng.random(p.shape) < p).sum(axis=0)
        return p.sum(axis=0)

    total = np.sum(parallel_map(run, list(range(math.ceil(shots_eff / BLOCK_SHOTS))), workers), axis=0)
    if shots > 0:
        return binomial_estimate(total, shots)
    return total / shots_eff, np.zeros_like(t)


def gaussian_decay(t, v0, t2):
    return v0 * np.exp(-((t / t2) ** 2))


def fit_coherence_time(delays, visibilities, errors=None) -> CoherenceResult:
    """Weighted fit of ``V(t) = V0 exp(-(t/T2)^2)``."""
    t = np.asarray(delays, float)
    v = np.asarray(visibilities, float)
    if t.size < 3:
        raise FitError("need at least three delays")
    order = np.argsort(t)
    if np.all(np.diff(v[order]) >= 0):
        raise FitError("visibility does not decay")
    sigma = None
    if errors is not None and np.all(np.asarray(errors) > 0):
        sigma = np.asarray(errors, float)
    # start from the delay where V drops to V(0)/e
    v0 = max(v[order][0], 1e-3)
    below = t[order][v[order] < v0 / math.e]
    t2_guess = below[0] if below.size else t.max()
    try:
        popt, pcov = curve_fit(gaussian_decay, t, v, p0=[v0, t2_guess], sigma=sigma,
                               absolute_sigma=sigma is not None, bounds=([0, 1e-12], [np.inf, np.inf]),
                               maxfev=20000)
    except RuntimeError as exc:
        raise FitError(str(exc)) from exc
    perr = np.sqrt(np.clip(np.diag(pcov), 0, None))
    if not np.all(np.isfinite(perr)):
        perr = np.zeros(2)
    return CoherenceResult(t, v, np.zeros_like(v) if errors is None else np.asarray(errors, float),
                           float(popt[1]), float(perr[1]), float(popt[0]), float(perr[0]))


def ou_phase_variance(t: float, sigma: float, tau: float, echo: bool = False) -> float:
    """Variance of the OU phase integral over a free evolution of length t."""
    if sigma == 0 or t == 0:
        return 0.0
    x = t / tau
    if echo:
        return 2 * sigma**2 * tau**2 * (x - 3 + 4 * math.exp(-x / 2) - math.exp(-x))
    return 2 * sigma**2 * tau**2 * (x - 1 + math.exp(-x))


def expected_visibility(t, model: DephasingModel, echo: bool = False):
    """Shot-averaged fringe contrast for Gaussian phase noise."""
    t = np.atleast_1d(np.asarray(t, float))
    out = []
    for ti in t:
        var = ou_phase_variance(ti, model.sigma_dynamic, model.tau_c, echo)
        if not echo:
            var += (model.sigma_static * ti) ** 2
        out.append(math.exp(-var / 2))
    n_pulses = 3 if echo else 2
    return np.array(out) * (1 - model.pulse_infidelity) ** n_pulses


def calibrate_dephasing(t2_ramsey: float | None, t2_echo: float, tau_c: float = 0.6,
                        delays=DEFAULT_DELAYS) -> DephasingModel:
    """Choose ``sigma_dynamic`` for the echo T2, then ``sigma_static`` for the
    Ramsey T2, both as Gaussian fits to the expected visibility on ``delays``."""
    def fitted(model, echo):
        return fit_coherence_time(delays, expected_visibility(delays, model, echo)).t2

    sd = brentq(lambda s: fitted(DephasingModel(0, s, tau_c), True) - t2_echo, 1e-3, 20.0, xtol=1e-10)
    if t2_ramsey is None:
        return DephasingModel(0.0, sd, tau_c)
    ss = brentq(lambda s: fitted(DephasingModel(s, sd, tau_c), False) - t2_ramsey, 0.0, 20.0, xtol=1e-10)
    return DephasingModel(ss, sd, tau_c)


@dataclass(frozen=True)
class CoherenceScan:
    delays: np.ndarray
    fringes: list
    result: CoherenceResult


def coherence_scan(model: DephasingModel, echo: bool, delays=DEFAULT_DELAYS, n_phases: int = 10,
                   shots_per_phase: int = 10, seed: int = 0, workers: int = 1,
                   weighted: bool = False) -> CoherenceScan:
    """Measure fringes at each delay, extract visibilities and fit T2.

    The default ``n_phases * shots_per_phase = 100`` experiments per delay
    matches the upper end of a typical data point.
    """
    phases = np.linspace(0, 2 * np.pi, n_phases, endpoint=False)
    fn = spin_echo_fringe if echo else ramsey_fringe
    fringes = [fn(float(d), phases, model, shots_per_phase, seed, workers=workers) for d in delays]
    vis = np.array([f.visibility(signed=True) for f in fringes])
    fit = fit_coherence_time(delays, vis[:, 0], vis[:, 1] if weighted else None)
    # the fit uses the signed estimates; the stored visibilities are clipped
    result = replace(fit, visibilities=np.clip(vis[:, 0], 0.0, 1.0), errors=vis[:, 1])
    return CoherenceScan(np.asarray(delays, float), fringes, result)
