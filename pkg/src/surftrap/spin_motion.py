"""Two-level qubit coupled to one truncated motional mode.

The state is an incoherent mixture over Fock index ``n`` with a coherent
two-level state for each ``n``.  Sideband pulses move population between
``(n, dark)`` and ``(n -/+ 1, bright)``; coherences between different ``n``
are never stored.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import eval_genlaguerre, gammaln

LEAKAGE_LIMIT = 1e-6
DEFAULT_N_MAX = 256
DEFAULT_ETA = 0.1


class TruncationError(ValueError):
    """Fock-space truncation too small for the requested distribution."""


class Branch(str, enum.Enum):
    CARRIER = "carrier"
    RED = "red_sideband"
    BLUE = "blue_sideband"

    @classmethod
    def parse(cls, value) -> "Branch":
        if isinstance(value, cls):
            return value
        aliases = {"red": cls.RED, "blue": cls.BLUE, "rsb": cls.RED, "bsb": cls.BLUE}
        value = str(value).lower()
        return aliases.get(value) or cls(value)

    @property
    def delta_n(self) -> int:
        return {Branch.CARRIER: 0, Branch.RED: -1, Branch.BLUE: 1}[self]


@dataclass(frozen=True)
class MotionalDistribution:
    probs: np.ndarray
    leakage: float = 0.0

    def __post_init__(self):
        p = np.array(self.probs, dtype=float)
        if p.ndim != 1 or p.size < 2:
            raise ValueError("probs must be a 1-D vector covering n = 0..n_max with n_max >= 1")
        if np.any(p < -1e-15):
            raise ValueError("negative occupation probability")
        p = np.clip(p, 0.0, None)
        # leakage bounds the mass missing from the truncated vector
        total = p.sum()
        if not (1 - 1e-9 - self.leakage <= total <= 1 + 1e-9):
            raise ValueError(f"probabilities sum to {p.sum():.12g} (+ leakage {self.leakage:.3g}), not 1")
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)

    @property
    def n_max(self) -> int:
        return self.probs.size - 1

    @property
    def n(self) -> np.ndarray:
        return np.arange(self.probs.size)

    @property
    def mean(self) -> float:
        return float(self.n @ self.probs)

    def resized(self, n_max: int) -> "MotionalDistribution":
        """Pad with zeros, or fold the tail above ``n_max`` into leakage."""
        p = self.probs
        if n_max >= self.n_max:
            return MotionalDistribution(np.pad(p, (0, n_max - self.n_max)), self.leakage)
        return MotionalDistribution(p[: n_max + 1], self.leakage + float(p[n_max + 1:].sum()))

    @classmethod
    def fock(cls, n: int, n_max: int = 16) -> "MotionalDistribution":
        p = np.zeros(max(n_max, n + 1) + 1)
        p[n] = 1.0
        return cls(p)


def thermal_tail(nbar: float, n_max: int) -> float:
    """Thermal probability mass above ``n_max``."""
    if nbar == 0:
        return 0.0
    return float((nbar / (nbar + 1.0)) ** (n_max + 1))


def thermal_distribution(nbar: float, n_max: int | None = None) -> MotionalDistribution:
    """Thermal occupation ``p_n = nbar^n / (nbar + 1)^(n + 1)``.

    With ``n_max=None`` the truncation starts at 256 and doubles until the
    discarded tail is below 1e-6; an explicit ``n_max`` that is too small
    raises :class:`TruncationError`.
    """
    if nbar < 0:
        raise ValueError("nbar must be >= 0")
    if n_max is None:
        n_max = DEFAULT_N_MAX
        while thermal_tail(nbar, n_max) >= LEAKAGE_LIMIT:
            n_max *= 2
    elif n_max < 1:
        raise ValueError("n_max must be >= 1")
    elif thermal_tail(nbar, n_max) >= LEAKAGE_LIMIT:
        raise TruncationError(
            f"thermal nbar={nbar} leaks {thermal_tail(nbar, n_max):.2e} above n_max={n_max}")
    n = np.arange(n_max + 1)
    if nbar == 0:
        p = (n == 0).astype(float)
    else:
        logp = n * np.log(nbar) - (n + 1) * np.log1p(nbar)
        p = np.exp(logp)
        p /= p.sum()
    return MotionalDistribution(p)


@dataclass(frozen=True)
class PulseSpec:
    branch: Branch
    omega0: float
    eta: float = DEFAULT_ETA
    duration: float = 0.0
    phase: float = 0.0
    detuning: float = 0.0
    # Debye-Waller / higher-order Lamb-Dicke matrix elements
    full_lamb_dicke: bool = False

    def __post_init__(self):
        object.__setattr__(self, "branch", Branch.parse(self.branch))
        if not self.omega0 > 0:
            raise ValueError("omega0 must be > 0")
        if not 0 <= self.eta < 1:
            raise ValueError("eta must lie in [0, 1)")
        if self.duration < 0:
            raise ValueError("duration must be >= 0")

    def with_duration(self, duration: float) -> "PulseSpec":
        return replace(self, duration=duration)


def _laguerre_coupling(n_lo, dn: int, eta: float) -> np.ndarray:
    n_lo = np.asarray(n_lo, dtype=float)
    ratio = np.exp(0.5 * (gammaln(n_lo + 1) - gammaln(n_lo + dn + 1)))
    return np.exp(-eta**2 / 2) * eta**dn * ratio * eval_genlaguerre(n_lo, dn, eta**2)


def rabi_frequency(pulse: PulseSpec, n):
    """Rabi frequency of the transition driven from ``(n, dark)``.

    First order in eta: carrier ``omega0``, red ``eta sqrt(n) omega0``, blue
    ``eta sqrt(n + 1) omega0``.  ``n`` may be fractional (used for pulse
    timing at a mean occupation) or an array.
    """
    n = np.asarray(n, dtype=float)
    if np.any(n < 0):
        raise ValueError("n must be >= 0")
    branch = pulse.branch
    if not pulse.full_lamb_dicke:
        if branch is Branch.CARRIER:
            out = np.full_like(n, pulse.omega0)
        elif branch is Branch.RED:
            out = pulse.eta * np.sqrt(n) * pulse.omega0
        else:
            out = pulse.eta * np.sqrt(n + 1) * pulse.omega0
    else:
        if branch is Branch.CARRIER:
            out = pulse.omega0 * _laguerre_coupling(n, 0, pulse.eta)
        elif branch is Branch.RED:
            out = np.where(n >= 1, pulse.omega0 * np.abs(
                _laguerre_coupling(np.maximum(n - 1, 0), 1, pulse.eta)), 0.0)
        else:
            out = pulse.omega0 * np.abs(_laguerre_coupling(n, 1, pulse.eta))
    return float(out) if out.ndim == 0 else out


def transition_probability(rabi, detuning, t):
    """Generalized Rabi formula for a two-level system starting in one state."""
    rabi = np.asarray(rabi, dtype=float)
    t = np.asarray(t, dtype=float)
    gen = np.sqrt(rabi**2 + detuning**2)
    with np.errstate(invalid="ignore", divide="ignore"):
        weight = np.where(gen > 0, rabi**2 / np.where(gen > 0, gen, 1.0) ** 2, 0.0)
    return weight * np.sin(gen * t / 2) ** 2


def flop_curve(dist: MotionalDistribution, pulse: PulseSpec, times, contrast: float = 1.0) -> np.ndarray:
    """Bright-state probability vs pulse duration, starting dark in every n.

    ``contrast`` scales the signal to mimic imperfect preparation/detection.
    """
    times = np.atleast_1d(np.asarray(times, dtype=float))
    rabi = rabi_frequency(pulse, dist.n)
    p = transition_probability(rabi[:, None], pulse.detuning, times[None, :])
    return contrast * (dist.probs @ p)


@dataclass(frozen=True)
class SpinMotionState:
    """Populations of (n, dark) and (n, bright) plus the carrier coherence
    <n, bright| rho |n, dark> for each n."""

    dark: np.ndarray
    bright: np.ndarray
    coherence: np.ndarray = field(default=None)
    leakage: float = 0.0

    def __post_init__(self):
        d = np.array(self.dark, dtype=float)
        b = np.array(self.bright, dtype=float)
        if d.shape != b.shape:
            raise ValueError("dark and bright vectors must have equal length")
        c = np.zeros(d.shape, complex) if self.coherence is None else np.array(self.coherence, complex)
        for arr in (d, b, c):
            arr.setflags(write=False)
        object.__setattr__(self, "dark", d)
        object.__setattr__(self, "bright", b)
        object.__setattr__(self, "coherence", c)

    @classmethod
    def prepare(cls, dist: MotionalDistribution, bright: bool = False) -> "SpinMotionState":
        zeros = np.zeros_like(dist.probs)
        if bright:
            return cls(zeros, dist.probs.copy(), leakage=dist.leakage)
        return cls(dist.probs.copy(), zeros, leakage=dist.leakage)

    @property
    def n_max(self) -> int:
        return self.dark.size - 1

    @property
    def total(self) -> float:
        return float(self.dark.sum() + self.bright.sum())

    @property
    def bright_probability(self) -> float:
        return float(self.bright.sum())

    def excitation(self) -> np.ndarray:
        """Per-n bright fraction (0 where the level is empty)."""
        tot = self.dark + self.bright
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(tot > 0, self.bright / np.where(tot > 0, tot, 1.0), 0.0)

    def motional(self) -> MotionalDistribution:
        return MotionalDistribution(self.dark + self.bright, self.leakage)

    def reset_spin(self, infidelity: float = 0.0) -> "SpinMotionState":
        """Optical pumping to dark, leaving n unchanged; a fraction
        ``infidelity`` of the bright population is left behind."""
        moved = self.bright * (1.0 - infidelity)
        return SpinMotionState(self.dark + moved, self.bright - moved, None, self.leakage)


def _carrier_unitaries(rabi, detuning, phase, t):
    gen = np.sqrt(rabi**2 + detuning**2)
    c = np.cos(gen * t / 2)
    s = np.sin(gen * t / 2)
    with np.errstate(invalid="ignore", divide="ignore"):
        nx = np.where(gen > 0, rabi * np.cos(phase) / np.where(gen > 0, gen, 1), 0.0)
        ny = np.where(gen > 0, rabi * np.sin(phase) / np.where(gen > 0, gen, 1), 0.0)
        nz = np.where(gen > 0, -detuning / np.where(gen > 0, gen, 1), 0.0)
    U = np.empty(rabi.shape + (2, 2), complex)
    # U = cos I - i sin (n . sigma), basis (dark, bright)
    U[..., 0, 0] = c - 1j * s * nz
    U[..., 1, 1] = c + 1j * s * nz
    U[..., 0, 1] = -1j * s * (nx - 1j * ny)
    U[..., 1, 0] = -1j * s * (nx + 1j * ny)
    return U


def apply_pulse(state: SpinMotionState, pulse: PulseSpec) -> SpinMotionState:
    """Apply one coherent drive segment.

    Carrier pulses rotate each n coherently.  Sideband pulses act on the pairs
    ``(n, dark) <-> (n - 1, bright)`` (red) or ``(n + 1, bright)`` (blue)
    assuming no prior coherence inside a pair; the inter-n coherence they
    create and any carrier coherence are discarded.  A blue pulse on the top
    level cannot leave the truncated space: that population stays put and the
    amount that would have moved is added to ``leakage``.
    """
    n = np.arange(state.n_max + 1)
    t = pulse.duration
    if pulse.branch is Branch.CARRIER:
        rabi = rabi_frequency(pulse, n)
        U = _carrier_unitaries(rabi, pulse.detuning, pulse.phase, t)
        rho = np.empty((n.size, 2, 2), complex)
        rho[:, 0, 0] = state.dark
        rho[:, 1, 1] = state.bright
        rho[:, 1, 0] = state.coherence
        rho[:, 0, 1] = np.conj(state.coherence)
        rho = U @ rho @ np.conj(np.swapaxes(U, -1, -2))
        return SpinMotionState(rho[:, 0, 0].real.clip(0), rho[:, 1, 1].real.clip(0),
                               rho[:, 1, 0], state.leakage)

    dark = state.dark.copy()
    bright = state.bright.copy()
    leakage = state.leakage
    s = transition_probability(rabi_frequency(pulse, n), pulse.detuning, t)
    if pulse.branch is Branch.RED:
        # pair k: (k, dark) <-> (k - 1, bright), k = 1..n_max
        d, b, sk = state.dark[1:], state.bright[:-1], s[1:]
        dark[1:] = d * (1 - sk) + b * sk
        bright[:-1] = b * (1 - sk) + d * sk
    else:
        # pair k: (k, dark) <-> (k + 1, bright), k = 0..n_max - 1
        d, b, sk = state.dark[:-1], state.bright[1:], s[:-1]
        dark[:-1] = d * (1 - sk) + b * sk
        bright[1:] = b * (1 - sk) + d * sk
        leakage += float(state.dark[-1] * s[-1])
    return SpinMotionState(dark, bright, None, leakage)
