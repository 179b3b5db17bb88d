"""State-dependent fluorescence detection with photon-count thresholding.

A bright ion emits at ``bright_rate`` until it is optically depumped to the
dark state after an exponentially distributed time (mean ``depump_tau``).  A
dark ion emits only background until a (weak) leak makes it bright after a
time with mean ``repump_tau``.  Background counts accumulate in both cases.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from .rng import sample_blocks

DARK, BRIGHT = 0, 1


class ThresholdTieError(ValueError):
    """Integer threshold equal to the observed count."""


@dataclass(frozen=True)
class DetectionModel:
    # Defaults are calibration outputs (see ``calibrate``): bright and
    # background rates and the depump time are chosen so that a 1 ms window
    # with threshold 1.5 gives 98.8 % average fidelity, with the bright-state
    # error dominated by depumping.
    bright_rate: float = 11.0e3  # photons / s
    background_rate: float = 47.5368  # photons / s
    depump_tau: float = 7.69865e-3  # s
    repump_tau: float = 10.0  # s
    threshold: float = 1.5

    def __post_init__(self):
        if self.bright_rate < 0 or self.background_rate < 0:
            raise ValueError("rates must be >= 0")
        if not (self.depump_tau > 0 and self.repump_tau > 0):
            raise ValueError("leak time constants must be > 0 (use math.inf to disable)")
        if not self.threshold > 0:
            raise ValueError("threshold must be > 0")


@dataclass(frozen=True)
class FidelityCurve:
    windows: np.ndarray
    err_bright: np.ndarray
    err_bright_se: np.ndarray
    err_dark: np.ndarray
    err_dark_se: np.ndarray

    @property
    def avg_fidelity(self) -> np.ndarray:
        return 1.0 - 0.5 * (self.err_bright + self.err_dark)

    @property
    def avg_fidelity_se(self) -> np.ndarray:
        return 0.5 * np.hypot(self.err_bright_se, self.err_dark_se)


def _leak_times(rng, tau, n):
    if math.isinf(tau):
        return np.full(n, np.inf)
    return rng.exponential(tau, n)


def draw_counts(rng: np.random.Generator, prepared: int, model: DetectionModel,
                window: float, n: int) -> np.ndarray:
    """Photon counts for ``n`` independent detections of one prepared state."""
    if window <= 0:
        raise ValueError("window must be > 0")
    if prepared == BRIGHT:
        t = np.minimum(_leak_times(rng, model.depump_tau, n), window)
        mean = model.bright_rate * t + model.background_rate * window
    else:
        t = np.minimum(_leak_times(rng, model.repump_tau, n), window)
        mean = model.bright_rate * (window - t) + model.background_rate * window
    return rng.poisson(mean)


def sample_photon_count(prepared: int, model: DetectionModel, window: float, seed: int,
                        shot: int = 0) -> int:
    """Single detection event, reproducible from ``(seed, shot)``."""
    from .rng import block_generator
    rng = block_generator(seed, f"detection/{prepared}/single", shot)
    return int(draw_counts(rng, prepared, model, window, 1)[0])


def classify(count, threshold: float = 1.5):
    """0 (dark) below the threshold, 1 (bright) above it."""
    c = np.asarray(count)
    if np.any(c < 0):
        raise ValueError("counts must be >= 0")
    if float(threshold).is_integer() and np.any(c == threshold):
        raise ThresholdTieError(f"count equals integer threshold {threshold}")
    out = (c > threshold).astype(int)
    return int(out) if out.ndim == 0 else out


def fidelity_curve(model: DetectionModel, windows, shots: int, seed: int,
                   workers: int = 1) -> FidelityCurve:
    """Monte-Carlo error probabilities per window with binomial standard errors."""
    if shots < 1:
        raise ValueError("shots must be >= 1")
    windows = np.atleast_1d(np.asarray(windows, dtype=float))
    eb, ed = [], []
    for k, w in enumerate(windows):
        for prepared, sink in ((BRIGHT, eb), (DARK, ed)):
            counts = sample_blocks(
                lambda rng, n, p=prepared, w=w: draw_counts(rng, p, model, w, n),
                shots, seed, f"detection/{prepared}/{k}", workers)
            wrong = classify(counts, model.threshold) != prepared
            sink.append(wrong.mean())
    eb, ed = np.array(eb), np.array(ed)
    se = lambda p: np.sqrt(p * (1 - p) / shots)
    return FidelityCurve(windows, eb, se(eb), ed, se(ed))


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(96)


def _cdf(k_max, mean):
    return special.pdtr(k_max, mean)


def analytic_error_model(model: DetectionModel, window: float) -> tuple[float, float]:
    """(err_bright, err_dark) by integrating the Poisson threshold error over
    the exponentially distributed leak time."""
    if window <= 0:
        raise ValueError("window must be > 0")
    k_max = math.floor(model.threshold) if not float(model.threshold).is_integer() else int(model.threshold) - 1
    r, b, w = model.bright_rate, model.background_rate, window

    def leak_average(tau, mean_after_leak_at, mean_no_leak):
        if math.isinf(tau):
            return _cdf(k_max, mean_no_leak)
        survive = math.exp(-w / tau)
        t = 0.5 * w * (_GL_NODES + 1.0)
        body = 0.5 * w * float(np.sum(_GL_WEIGHTS * np.exp(-t / tau) / tau * _cdf(k_max, mean_after_leak_at(t))))
        return survive * _cdf(k_max, mean_no_leak) + body

    p_dark_given_bright = leak_average(model.depump_tau, lambda t: r * t + b * w, (r + b) * w)
    p_dark_given_dark = leak_average(model.repump_tau, lambda t: r * (w - t) + b * w, b * w)
    return float(p_dark_given_bright), float(1.0 - p_dark_given_dark)


def analytic_curve(model: DetectionModel, windows) -> tuple[np.ndarray, np.ndarray]:
    errs = np.array([analytic_error_model(model, w) for w in np.atleast_1d(windows)])
    return errs[:, 0], errs[:, 1]


def optimal_window(model: DetectionModel, lo: float = 1e-5, hi: float = 0.1) -> tuple[float, float]:
    """Window minimizing the analytic average error, and that error."""
    from scipy.optimize import minimize_scalar

    ws = np.geomspace(lo, hi, 60)
    errs = [sum(analytic_error_model(model, w)) / 2 for w in ws]
    k = int(np.argmin(errs))
    a, b = ws[max(k - 1, 0)], ws[min(k + 1, ws.size - 1)]
    res = minimize_scalar(lambda lw: sum(analytic_error_model(model, math.exp(lw))) / 2,
                          bounds=(math.log(a), math.log(b)), method="bounded", options={"xatol": 1e-7})
    return math.exp(res.x), float(res.fun)


def calibrate(target_fidelity: float = 0.988, window: float = 1e-3, bright_rate: float = 11.0e3,
              repump_tau: float = 10.0, threshold: float = 1.5) -> DetectionModel:
    """Choose background rate and depump time so that ``window`` is the
    optimal detection window and reaches ``target_fidelity``."""
    from scipy.optimize import least_squares

    def residual(x):
        m = DetectionModel(bright_rate, math.exp(x[0]), math.exp(x[1]), repump_tau, threshold)
        w_opt, err = optimal_window(m)
        return [math.log(w_opt / window), (err - (1 - target_fidelity)) / (1 - target_fidelity)]

    sol = least_squares(residual, x0=[math.log(50.0), math.log(1e-2)], diff_step=1e-3, xtol=1e-10)
    return DetectionModel(bright_rate, math.exp(sol.x[0]), math.exp(sol.x[1]), repump_tau, threshold)
