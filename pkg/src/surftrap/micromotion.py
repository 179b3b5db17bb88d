"""Classical ion trajectories in a radial RF quadrupole with stray fields.

Each radial axis obeys a damped Mathieu equation

    x'' = -(W^2/4) (a - 2 q (1 + eps cos w_e t) cos W t) x + Q E / m - gamma x'

where the excitation tone is a fractional modulation ``eps`` of the RF
amplitude.  Mixing of the tone with the RF gives a force at ``W - w_e``
whose strength is proportional to the ion's distance from the RF null, so
an ion sitting on the null feels nothing.  The two radial axes carry
opposite ``q`` (traceless RF quadrupole) and share the same RF null.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from numba import njit
from scipy.optimize import brentq

from . import constants
from .rng import parallel_map

STEPS_PER_CYCLE = 64
DIVERGENCE_LIMIT = 1e-3  # m
# fractional RF modulation; well below the onset of parametric pumping
DEFAULT_MODULATION = 1e-3


class InstabilityError(RuntimeError):
    """Trajectory diverged or the Mathieu parameters are unstable."""


class CompensationError(RuntimeError):
    """Compensation search did not converge."""


@dataclass(frozen=True)
class Beam:
    """Cooling/detection beam in the x-z plane."""

    angle: float = math.pi / 4  # from the x axis, radians
    detuning: float = -constants.COOLING_LINEWIDTH / 2  # rad/s
    linewidth: float = constants.COOLING_LINEWIDTH
    saturation: float = 0.01
    wavelength: float = constants.COOLING_WAVELENGTH

    def __post_init__(self):
        if not self.linewidth > 0:
            raise ValueError("linewidth must be > 0")
        if self.saturation < 0:
            raise ValueError("saturation must be >= 0")

    @property
    def direction(self) -> np.ndarray:
        return np.array([math.cos(self.angle), math.sin(self.angle)])

    @property
    def wavenumber(self) -> float:
        return constants.TWO_PI / self.wavelength

    @property
    def peak_rate(self) -> float:
        return scatter_rate(0.0, 0.0, self.linewidth, self.saturation, self.wavelength)


def scatter_rate(velocity, detuning, linewidth: float, saturation: float = 0.01,
                 wavelength: float = constants.COOLING_WAVELENGTH):
    """Photon scattering rate (1/s) for velocity along the beam (m/s) and
    laser detuning (rad/s), including the Doppler shift ``-k v``."""
    if not linewidth > 0:
        raise ValueError("linewidth must be > 0")
    k = constants.TWO_PI / wavelength
    eff = np.asarray(detuning) - k * np.asarray(velocity)
    return 0.5 * linewidth * saturation / (1 + saturation + 4 * eff**2 / linewidth**2)


@dataclass(frozen=True)
class RfTrapDynamics:
    omega_rf: float = constants.TWO_PI * 27.8e6
    secular_freqs: tuple[float, float] = (constants.TWO_PI * 1.48e6, constants.TWO_PI * 2.10e6)
    stray_field: tuple[float, float] = (0.0, 0.0)  # V/m along (x, z)
    excitation: tuple[float, float] = (0.0, 0.0)  # (fractional RF modulation, rad/s)
    damping: float = constants.TWO_PI * 30e3  # 1/s
    mass: float = constants.YB171_ION_MASS
    charge: float = constants.ELEMENTARY_CHARGE
    _params: tuple = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        if not self.omega_rf > 2 * max(self.secular_freqs):
            raise ValueError("omega_rf must exceed twice the largest secular frequency")
        if min(self.secular_freqs) <= 0:
            raise ValueError("secular frequencies must be > 0")
        if self.damping < 0:
            raise ValueError("damping must be >= 0")
        object.__setattr__(self, "_params", _mathieu_parameters(self.omega_rf, tuple(self.secular_freqs)))

    @property
    def a(self) -> np.ndarray:
        return np.array(self._params[0])

    @property
    def q(self) -> np.ndarray:
        return np.array(self._params[1])

    @property
    def dt(self) -> float:
        return constants.TWO_PI / (STEPS_PER_CYCLE * self.omega_rf)

    def equilibrium(self, field=None) -> np.ndarray:
        """Secular displacement ``Q E / (m w^2)`` from the RF null."""
        e = np.asarray(self.stray_field if field is None else field, float)
        return self.charge * e / (self.mass * np.asarray(self.secular_freqs) ** 2)

    def resonance(self, axis: int) -> float:
        """Excitation frequency whose RF mixing product hits the secular mode."""
        return self.omega_rf - self.secular_freqs[axis]

    def with_field(self, stray) -> "RfTrapDynamics":
        return replace(self, stray_field=tuple(map(float, stray)))


def _one_cycle_map(omega_rf, a, q, steps=STEPS_PER_CYCLE):
    """Stroboscopic (phase-0) map of the undamped, undriven integrator."""
    h = constants.TWO_PI / (steps * omega_rf)
    cos_rf = np.cos(omega_rf * h * np.arange(steps + 1))
    k = omega_rf**2 / 4
    x = np.array([1.0, 0.0])
    v = np.array([0.0, 1.0])
    acc = -k * (a - 2 * q * cos_rf[0]) * x
    for j in range(steps):
        v = v + 0.5 * h * acc
        x = x + h * v
        acc = -k * (a - 2 * q * cos_rf[j + 1]) * x
        v = v + 0.5 * h * acc
    return np.array([[x[0], x[1]], [v[0], v[1]]])


def floquet_frequency(omega_rf: float, a: float, q: float) -> float:
    """Secular frequency of the discretized Mathieu oscillator."""
    m = _one_cycle_map(omega_rf, a, q)
    half_trace = 0.5 * np.trace(m)
    if abs(half_trace) >= 1:
        raise InstabilityError(f"Mathieu parameters a={a:.4g}, q={q:.4g} are unstable")
    return math.acos(half_trace) * omega_rf / constants.TWO_PI


def _mathieu_parameters(omega_rf, secular):
    # traceless RF quadrupole: q_x = -q_z, sized so the pseudopotential
    # frequency equals the rms of the requested pair; the DC a_i set the split
    w_ps2 = 0.5 * (secular[0] ** 2 + secular[1] ** 2)
    q0 = 2 * math.sqrt(2 * w_ps2) / omega_rf
    if q0 >= 0.9:
        raise InstabilityError(f"Mathieu q={q0:.3f} is outside the stable region")
    qs = (q0, -q0)
    a_vals = []
    for w, qi in zip(secular, qs):
        guess = 4 * w**2 / omega_rf**2 - qi**2 / 2
        span = 0.5 * q0**2 + abs(guess)
        a_vals.append(brentq(lambda a: floquet_frequency(omega_rf, a, qi) - w,
                             guess - 0.2 * span, guess + 0.2 * span, xtol=1e-15))
    return tuple(a_vals), qs


def secular_energy(dyn: RfTrapDynamics, x, v) -> np.ndarray:
    """Secular energy per axis from the Courant-Snyder invariant of the
    stroboscopic map; valid for states sampled at RF phase zero."""
    x = np.asarray(x, float)
    v = np.asarray(v, float)
    out = []
    for i in range(2):
        m = _one_cycle_map(dyn.omega_rf, dyn.a[i], dyn.q[i])
        c = 0.5 * np.trace(m)
        s = math.sqrt(1 - c**2)
        beta = m[0, 1] / s
        alpha = (m[0, 0] - m[1, 1]) / (2 * s)
        gamma = -m[1, 0] / s
        inv = gamma * x[i] ** 2 + 2 * alpha * x[i] * v[i] + beta * v[i] ** 2
        out.append(0.5 * dyn.mass * dyn.secular_freqs[i] * inv)
    return np.array(out)


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray
    positions: np.ndarray  # (samples, 2) metres from the RF null
    velocities: np.ndarray


def _initial_state(dyn, fields):
    # start on the displaced equilibrium at RF phase zero, including the
    # in-phase micromotion excursion, to keep secular transients small
    x0 = dyn.charge * fields / (dyn.mass * np.asarray(dyn.secular_freqs)[:, None] ** 2)
    return x0 * (1 + 0.5 * dyn.q[:, None]), np.zeros_like(x0)


@njit(cache=True)
def _verlet_kernel(x, v, ka, k2q, force, eps, w_exc, h, damp, n_steps, start, rec_every,
                   rec_x, rec_v, kx, kz, kwave, detuning, g2, weights, bins):
    """Damped velocity-Verlet steps for each column of ``x``/``v`` (in place).

    From step ``start`` on, every ``rec_every``-th state is written to
    ``rec_x``/``rec_v`` (if they have room) and, when ``weights`` is
    non-empty, the normalized Lorentzian factor is accumulated into ``bins``
    by RF phase with one weight per RF cycle.  Returns the step at which each
    trajectory diverged, or -1.
    """
    n = x.shape[1]
    cyc = 64
    cos_rf = np.empty(cyc + 1)
    for m in range(cyc + 1):
        cos_rf[m] = math.cos(2.0 * math.pi * m / cyc)
    status = np.full(n, -1)
    n_rec = rec_x.shape[0]
    n_w = weights.shape[0]
    for j in range(n):
        x0, x1 = x[0, j], x[1, j]
        v0, v1 = v[0, j], v[1, j]
        f0, f1 = force[0, j], force[1, j]
        e, we = eps[j], w_exc[j]
        rf = 1.0
        if e != 0.0:
            rf = 1.0 + e
        a0 = -(ka[0] - k2q[0] * rf) * x0 + f0
        a1 = -(ka[1] - k2q[1] * rf) * x1 + f1
        r = 0
        for step in range(n_steps):
            if step >= start:
                rel = step - start
                if rel % rec_every == 0 and r < n_rec:
                    rec_x[r, 0, j] = x0
                    rec_x[r, 1, j] = x1
                    rec_v[r, 0, j] = v0
                    rec_v[r, 1, j] = v1
                    r += 1
                if n_w > 0:
                    eff = detuning - kwave * (kx * v0 + kz * v1)
                    bins[step % cyc, j] += weights[rel // cyc] / (1.0 + g2 * eff * eff)
            v0 = v0 * damp + 0.5 * h * a0
            v1 = v1 * damp + 0.5 * h * a1
            x0 += h * v0
            x1 += h * v1
            rf = cos_rf[(step + 1) % cyc]
            if e != 0.0:
                rf *= 1.0 + e * math.cos(we * ((step + 1) * h))
            a0 = -(ka[0] - k2q[0] * rf) * x0 + f0
            a1 = -(ka[1] - k2q[1] * rf) * x1 + f1
            v0 = (v0 + 0.5 * h * a0) * damp
            v1 = (v1 + 0.5 * h * a1) * damp
            if step % cyc == 0:
                if not (abs(x0) < DIVERGENCE_LIMIT and abs(x1) < DIVERGENCE_LIMIT):
                    status[j] = step
                    break
        if n_steps >= start and r < n_rec and status[j] < 0 and (n_steps - start) % rec_every == 0:
            rec_x[r, 0, j] = x0
            rec_x[r, 1, j] = x1
            rec_v[r, 0, j] = v0
            rec_v[r, 1, j] = v1
        x[0, j], x[1, j] = x0, x1
        v[0, j], v[1, j] = v0, v1
    return status


def _integrate(dyn: RfTrapDynamics, fields, eps, w_exc, n_steps, start=0, record_every=0,
               beam: Beam | None = None, weights=None, x=None, v=None):
    """Integrate a batch of trajectories.

    ``fields`` is (2, N) in V/m; ``eps`` and ``w_exc`` broadcast to length N.
    Returns ``(x, v, rec_x, rec_v, bins)``; recordings cover steps
    ``start, start + record_every, ..., n_steps`` and ``bins`` holds the
    window-weighted Lorentzian factor by RF phase when a beam is given.
    """
    fields = np.ascontiguousarray(np.asarray(fields, float).reshape(2, -1))
    n = fields.shape[1]
    eps = np.ascontiguousarray(np.broadcast_to(np.asarray(eps, float), (n,)))
    w_exc = np.ascontiguousarray(np.broadcast_to(np.asarray(w_exc, float), (n,)))
    if x is None:
        x, v = _initial_state(dyn, fields)
    x = np.array(x, float).reshape(2, n)
    v = np.array(v, float).reshape(2, n)
    h = dyn.dt
    k = dyn.omega_rf**2 / 4
    n_rec = (n_steps - start) // record_every + 1 if record_every > 0 else 0
    rec_x = np.zeros((n_rec, 2, n))
    rec_v = np.zeros((n_rec, 2, n))
    bins = np.zeros((STEPS_PER_CYCLE, n))
    if beam is None:
        kdir, kwave, det, g2, w = np.zeros(2), 0.0, 0.0, 0.0, np.zeros(0)
    else:
        kdir = beam.direction
        kwave, det = beam.wavenumber, beam.detuning
        g2 = 4 / beam.linewidth**2 / (1 + beam.saturation)
        w = np.asarray(weights, float)
    status = _verlet_kernel(x, v, k * dyn.a, 2 * k * dyn.q, dyn.charge * fields / dyn.mass, eps, w_exc,
                            h, math.exp(-0.5 * dyn.damping * h), int(n_steps), int(start),
                            max(int(record_every), 1), rec_x, rec_v, float(kdir[0]), float(kdir[1]),
                            kwave, det, g2, w, bins)
    if np.any(status >= 0):
        raise InstabilityError(f"trajectory diverged after {int(status[status >= 0].min())} steps")
    return x, v, rec_x, rec_v, bins


def integrate_trajectory(dyn: RfTrapDynamics, duration: float, dt: float | None = None,
                         x0=None, v0=None, record_every: int = 1) -> Trajectory:
    """Integrate one trajectory and sample it every ``record_every`` steps.

    The step is fixed at 1/64 of an RF period; an explicit ``dt`` is only
    checked against the resolution requirement of at least 50 steps per
    RF cycle.
    """
    h_max = constants.TWO_PI / (50 * dyn.omega_rf)
    if dt is not None and dt > h_max * (1 + 1e-12):
        raise ValueError("dt must be <= 2 pi / (50 omega_rf)")
    n_steps = int(round(duration / dyn.dt))
    x = v = None
    if x0 is not None:
        x = np.asarray(x0, float).reshape(2, 1)
        v = np.zeros((2, 1)) if v0 is None else np.asarray(v0, float).reshape(2, 1)
    _, _, rx, rv, _ = _integrate(dyn, np.asarray(dyn.stray_field, float)[:, None], dyn.excitation[0],
                                 dyn.excitation[1], n_steps, 0, record_every, x=x, v=v)
    times = np.arange(rx.shape[0]) * record_every * dyn.dt
    return Trajectory(times, rx[:, :, 0], rv[:, :, 0])


@dataclass(frozen=True)
class Lineshape:
    detunings: np.ndarray  # rad/s
    scatter_rates: np.ndarray  # photons/s

    def fwhm(self) -> float:
        return _fwhm(self.detunings, self.scatter_rates)


def _fwhm(x, y) -> float:
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    i = int(np.argmax(y))
    half = 0.5 * y[i]
    left = np.nonzero(y[:i] < half)[0]
    right = np.nonzero(y[i:] < half)[0]
    if left.size == 0 or right.size == 0:
        raise ValueError("half maximum not bracketed by the detuning grid")
    l, r = left[-1], i + right[0]
    xl = np.interp(half, [y[l], y[l + 1]], [x[l], x[l + 1]])
    xr = np.interp(half, [y[r], y[r - 1]], [x[r], x[r - 1]])
    return float(xr - xl)


def lineshape_from_velocities(velocities, detunings, beam: Beam) -> Lineshape:
    """Time-averaged scattering rate over sampled beam-projected velocities."""
    v = np.asarray(velocities, float)
    d = np.asarray(detunings, float)
    rates = np.array([scatter_rate(v, dj, beam.linewidth, beam.saturation, beam.wavelength).mean()
                      for dj in d])
    return Lineshape(d, rates)


@dataclass(frozen=True)
class Readout:
    """Integration lengths, in RF cycles."""

    settle_cycles: int = 1500
    average_cycles: int = 400


STEADY = Readout()
QUICK = Readout(300, 300)


def _brightness_batch(dyn, fields, eps, w_exc, beam: Beam, readout: Readout):
    """Mean scattering rate (normalized to the peak rate) per trajectory, and
    the rate binned by RF phase, shape (64, N).

    The time average uses a Hann window over whole RF cycles, which keeps
    slow oscillations that do not fit the window an integer number of times
    from leaking into the mean.
    """
    cycles = readout.average_cycles
    weights = np.sin(np.pi * (np.arange(cycles) + 0.5) / cycles) ** 2
    weights /= weights.sum()
    start = readout.settle_cycles * STEPS_PER_CYCLE
    total = start + cycles * STEPS_PER_CYCLE
    *_, bins = _integrate(dyn, fields, eps, w_exc, total, start, 0, beam, weights)
    return bins.sum(axis=0) / STEPS_PER_CYCLE, bins


def _chunked(fn, n, workers, *arrays):
    """Run ``fn`` on column chunks of the batch; results are concatenated."""
    if workers <= 1 or n < 2 * workers:
        return fn(*arrays)
    edges = np.linspace(0, n, workers + 1).astype(int)
    parts = parallel_map(lambda ab: fn(*[a[..., ab[0]:ab[1]] for a in arrays]),
                         list(zip(edges[:-1], edges[1:])), workers)
    return np.concatenate(parts, axis=-1)


@dataclass(frozen=True)
class ExcitationSpectrum:
    frequencies: np.ndarray  # excitation frequency, rad/s
    brightness: np.ndarray  # normalized to the peak scattering rate
    baseline: float  # brightness without excitation

    @property
    def peak_height(self) -> float:
        """Brightness excess at the peak over the unexcited baseline."""
        return float(np.max(self.brightness) - self.baseline)

    @property
    def peak_metric(self) -> float:
        """Square root of the peak excess: proportional to the driven secular
        amplitude, hence linear in the residual field for small fields."""
        return math.sqrt(max(self.peak_height, 0.0))


def excitation_spectrum(dyn: RfTrapDynamics, frequencies, beam: Beam = Beam(),
                        readout: Readout = STEADY, workers: int = 1) -> ExcitationSpectrum:
    """Steady-state brightness against excitation frequency, using the
    excitation amplitude of ``dyn``; a red-detuned beam is required."""
    if beam.detuning >= 0:
        raise ValueError("excitation spectroscopy needs a red-detuned cooling beam")
    w = np.atleast_1d(np.asarray(frequencies, float))
    n = w.size + 1
    fields = np.repeat(np.asarray(dyn.stray_field, float)[:, None], n, axis=1)
    eps = np.append(np.full(w.size, dyn.excitation[0]), 0.0)
    w_all = np.append(w, 0.0)

    def run(f, e, we):
        return _brightness_batch(dyn, f, e, we, beam, readout)[0]

    b = _chunked(run, n, workers, fields, eps, w_all)
    return ExcitationSpectrum(w, b[:-1], float(b[-1]))


def resonance_grid(dyn: RfTrapDynamics, axis: int, span: float = constants.TWO_PI * 150e3,
                   points: int = 41) -> np.ndarray:
    c = dyn.resonance(axis)
    return np.linspace(c - span, c + span, points)


def rf_correlation_contrast(dyn: RfTrapDynamics, beam: Beam = Beam(angle=0.0),
                            readout: Readout = QUICK) -> float:
    """Contrast ``(max - min) / (max + min)`` of the scattering rate binned by
    RF phase; the excitation tone is switched off."""
    return float(_contrast_batch(dyn, np.asarray(dyn.stray_field, float)[:, None], beam, readout)[0])


def rf_contrast_scan(dyn: RfTrapDynamics, fields, beam: Beam = Beam(angle=0.0),
                     readout: Readout = QUICK, workers: int = 1) -> np.ndarray:
    """RF-phase contrast for each column of ``fields`` (shape (2, n), V/m);
    the stray field of ``dyn`` is ignored."""
    return _contrast_batch(dyn, fields, beam, readout, workers)


def _contrast_batch(dyn, fields, beam, readout, workers=1):
    fields = np.asarray(fields, float).reshape(2, -1)

    def run(f):
        _, bins = _brightness_batch(dyn, f, 0.0, 0.0, beam, readout)
        hi, lo = bins.max(axis=0), bins.min(axis=0)
        return (hi - lo) / (hi + lo)

    return _chunked(run, fields.shape[1], workers, fields)


def broadened_lineshape(dyn: RfTrapDynamics, detunings, beam: Beam = Beam(),
                        readout: Readout = QUICK) -> Lineshape:
    """Scattering rate against laser detuning, averaged over the steady-state
    velocity of ``dyn`` projected on the beam (the probe does not act back on
    the motion)."""
    start = readout.settle_cycles * STEPS_PER_CYCLE
    total = start + readout.average_cycles * STEPS_PER_CYCLE
    _, _, _, rv, _ = _integrate(dyn, np.asarray(dyn.stray_field, float)[:, None], dyn.excitation[0],
                                dyn.excitation[1], total - 1, start, 1)
    return lineshape_from_velocities(rv[:, :, 0] @ beam.direction, detunings, beam)


@dataclass(frozen=True)
class CompensationSearch:
    span: float = 20.0  # V/m, half-width of the coarse grid per axis
    grid_points: int = 9
    tolerance: float = 2e-3  # V/m
    rounds: int = 4
    max_iterations: int = 60
    objective: str = "excitation"  # or "rf_phase"
    beam_angle: float | None = None  # default: 45 deg (excitation) or 0 (rf_phase)
    readout: Readout = QUICK

    def __post_init__(self):
        if self.objective not in ("excitation", "rf_phase"):
            raise ValueError("objective must be 'excitation' or 'rf_phase'")
        if self.grid_points < 3 or self.span <= 0 or self.tolerance <= 0:
            raise ValueError("invalid compensation search settings")


@dataclass(frozen=True)
class CompensationResult:
    compensation: np.ndarray  # applied field, V/m
    residual: np.ndarray  # stray + compensation, V/m (known only in simulation)
    objective: tuple[float, float]
    evaluations: int
    converged: bool


def _objective(dyn, search: CompensationSearch):
    """Per-axis objective evaluated for a batch of compensation fields (2, N);
    returns (2, N): row i is the metric minimized along axis i."""
    stray = np.asarray(dyn.stray_field, float)[:, None]
    if search.objective == "rf_phase":
        beam = Beam(angle=0.0 if search.beam_angle is None else search.beam_angle)

        def f(comp):
            c = _contrast_batch(dyn, stray + comp, beam, search.readout)
            return np.vstack([c, c])
        return f

    beam = Beam(angle=math.pi / 4 if search.beam_angle is None else search.beam_angle)
    eps = dyn.excitation[0] if dyn.excitation[0] > 0 else DEFAULT_MODULATION

    def f(comp):
        n = comp.shape[1]
        fields = np.tile(stray + comp, 3)
        e = np.concatenate([np.full(n, eps), np.full(n, eps), np.zeros(n)])
        w = np.concatenate([np.full(n, dyn.resonance(0)), np.full(n, dyn.resonance(1)), np.zeros(n)])
        b, _ = _brightness_batch(dyn, fields, e, w, beam, search.readout)
        base = b[2 * n:]
        return np.sqrt(np.clip(np.vstack([b[:n] - base, b[n:2 * n] - base]), 0.0, None))
    return f


def compensate(dyn: RfTrapDynamics, search: CompensationSearch = CompensationSearch()) -> CompensationResult:
    """Find the DC compensation field that minimizes the micromotion signal.

    A coarse 2-D grid over ``[-span, span]^2`` brackets the minimum, then
    golden-section searches refine each axis in turn until neither moves by
    more than ``tolerance``.  With the RF-phase objective only the component
    along the beam is observable; a flat axis is left at its grid value.
    """
    f = _objective(dyn, search)
    g = np.linspace(-search.span, search.span, search.grid_points)
    gx, gz = np.meshgrid(g, g, indexing="ij")
    comp_grid = np.vstack([gx.ravel(), gz.ravel()])
    vals = f(comp_grid)
    evals = comp_grid.shape[1]
    best = np.zeros(2)
    steps = [g[1] - g[0]] * 2
    flat = [False, False]
    for i in range(2):
        # the metric for axis i, summed over the other axis's grid values
        per_axis = vals[i].reshape(search.grid_points, search.grid_points).sum(axis=1 - i)
        flat[i] = np.ptp(per_axis) <= 1e-9 * max(np.max(np.abs(per_axis)), 1e-300)
        best[i] = 0.0 if flat[i] else g[int(np.argmin(per_axis))]

    invphi = (math.sqrt(5) - 1) / 2
    active = [i for i in range(2) if not flat[i]]

    def batch(points):
        # points: list of (axis, value); the other axis stays at ``best``
        comp = np.repeat(best[:, None], len(points), axis=1)
        for j, (i, c) in enumerate(points):
            comp[i, j] = c
        vals = f(comp)
        return [float(vals[i, j]) for j, (i, _) in enumerate(points)]

    converged = not active
    for _ in range(search.rounds):
        if not active:
            break
        # both axes are refined in lockstep so that each batch integrates
        # one trial point per axis
        br = {}
        for i in active:
            lo, hi = best[i] - steps[i], best[i] + steps[i]
            br[i] = [lo, hi, hi - invphi * (hi - lo), lo + invphi * (hi - lo)]
        vals = batch([(i, br[i][2]) for i in active] + [(i, br[i][3]) for i in active])
        evals += len(vals)
        fv = {i: [vals[k], vals[k + len(active)]] for k, i in enumerate(active)}
        it = 0
        while any(br[i][1] - br[i][0] > search.tolerance for i in active):
            it += 1
            if it > search.max_iterations:
                raise CompensationError("golden-section search did not converge")
            todo = []
            for i in active:
                lo, hi, c1, c2 = br[i]
                if hi - lo <= search.tolerance:
                    continue
                f1, f2 = fv[i]
                if f1 <= f2:
                    hi, c2, f2 = c2, c1, f1
                    c1 = hi - invphi * (hi - lo)
                    br[i], fv[i] = [lo, hi, c1, c2], [None, f2]
                    todo.append((i, c1, 0))
                else:
                    lo, c1, f1 = c1, c2, f2
                    c2 = lo + invphi * (hi - lo)
                    br[i], fv[i] = [lo, hi, c1, c2], [f1, None]
                    todo.append((i, c2, 1))
            vals = batch([(i, c) for i, c, _ in todo])
            evals += len(vals)
            for (i, _, slot), val in zip(todo, vals):
                fv[i][slot] = val
        moved = 0.0
        for i in active:
            new = 0.5 * (br[i][0] + br[i][1])
            moved = max(moved, abs(new - best[i]))
            best[i] = new
            steps[i] = max(4 * search.tolerance, steps[i] / 4)
        if moved <= search.tolerance:
            converged = True
            break
    if not converged:
        raise CompensationError(f"no convergence after {search.rounds} rounds")
    final = f(best[:, None])[:, 0]
    return CompensationResult(best.copy(), best + np.asarray(dyn.stray_field, float),
                              (float(final[0]), float(final[1])), evals + 1, converged)
