"""Doppler initialization, Raman sideband cooling and motional heating."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import diags

from .spin_motion import (
    Branch,
    MotionalDistribution,
    PulseSpec,
    SpinMotionState,
    apply_pulse,
    LEAKAGE_LIMIT,
    rabi_frequency,
    thermal_distribution,
    thermal_tail,
)


class PulseRule(str, enum.Enum):
    PI_AT_N1 = "pi_at_n1"
    PI_AT_NBAR = "pi_at_nbar"
    FIXED = "fixed"


class HeatingModel(str, enum.Enum):
    BIRTH_DEATH = "birth_death"
    NBAR_INCREMENT = "nbar_increment"


@dataclass(frozen=True)
class HeatingProcess:
    rate: float  # quanta / s
    model: HeatingModel = HeatingModel.BIRTH_DEATH

    def __post_init__(self):
        object.__setattr__(self, "model", HeatingModel(self.model))
        if self.rate < 0:
            raise ValueError("heating rate must be >= 0")


@dataclass(frozen=True)
class CoolingMode:
    trap_frequency: float  # rad/s
    eta: float
    omega0: float  # rad/s, carrier-equivalent Raman Rabi frequency
    label: str = ""

    def red_pulse(self, duration: float = 0.0) -> PulseSpec:
        return PulseSpec(Branch.RED, self.omega0, self.eta, duration)


def default_modes() -> tuple[CoolingMode, CoolingMode]:
    """Measured 2.1 MHz mode first, then the 1.48 MHz mode.

    eta scales as 1/sqrt(trap frequency) from 0.1 at 2.1 MHz.
    """
    w_hi = 2 * math.pi * 2.10e6
    w_lo = 2 * math.pi * 1.48e6
    omega0 = 2 * math.pi * 150e3
    return (
        CoolingMode(w_hi, 0.1, omega0, "2.10 MHz"),
        CoolingMode(w_lo, 0.1 * math.sqrt(w_hi / w_lo), omega0, "1.48 MHz"),
    )


@dataclass(frozen=True)
class CoolingSchedule:
    iterations: int = 50
    modes: tuple[CoolingMode, ...] = field(default_factory=default_modes)
    pulse_rule: PulseRule = PulseRule.PI_AT_NBAR
    fixed_duration: float | None = None
    pump_reset_infidelity: float = 0.0
    # True: each iteration pulses every mode once.  False: iterations are
    # shared out round-robin between the modes.
    count_per_mode: bool = True
    pump_time: float = 20e-6
    heating: HeatingProcess | None = HeatingProcess(800.0)

    def __post_init__(self):
        object.__setattr__(self, "pulse_rule", PulseRule(self.pulse_rule))
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")
        if not 0 <= self.pump_reset_infidelity <= 1:
            raise ValueError("pump_reset_infidelity must be a probability")
        if self.pulse_rule is PulseRule.FIXED and (self.fixed_duration is None or self.fixed_duration < 0):
            raise ValueError("fixed pulse rule needs a non-negative fixed_duration")
        if not self.modes:
            raise ValueError("at least one mode is required")
        if self.pump_time < 0:
            raise ValueError("pump_time must be >= 0")


def doppler_cool(nbar_doppler: float, n_max: int | None = None) -> MotionalDistribution:
    """Thermal state at the Doppler limit (the spin is taken as pumped dark)."""
    if nbar_doppler < 0:
        raise ValueError("nbar_doppler must be >= 0")
    return thermal_distribution(nbar_doppler, n_max)


def pulse_duration(mode: CoolingMode, schedule: CoolingSchedule, nbar: float) -> float:
    pulse = mode.red_pulse()
    if schedule.pulse_rule is PulseRule.FIXED:
        return float(schedule.fixed_duration)
    n_ref = 1.0 if schedule.pulse_rule is PulseRule.PI_AT_N1 else max(nbar, 1.0)
    return math.pi / rabi_frequency(pulse, n_ref)


def sideband_cool_step(state: SpinMotionState, mode: CoolingMode,
                       schedule: CoolingSchedule) -> SpinMotionState:
    """One red-sideband pulse followed by optical pumping back to dark."""
    nbar = state.motional().mean
    duration = pulse_duration(mode, schedule, nbar)
    state = apply_pulse(state, mode.red_pulse(duration))
    return state.reset_spin(schedule.pump_reset_infidelity)


def _birth_death_generator(n_max: int):
    """Generator on n = 0..n_max plus one absorbing overflow level."""
    n = np.arange(n_max + 2, dtype=float)
    birth = n + 1.0
    death = n.copy()
    birth[-1] = 0.0  # overflow level absorbs
    death[-1] = 0.0
    diag = -(birth + death)
    return diags([diag, birth[:-1], death[1:]], [0, -1, 1], format="csc")


def _expm_action(a, v: np.ndarray) -> np.ndarray:
    """``expm(a) @ v`` by a scaled Taylor series.

    Unlike scipy's ``expm_multiply`` this uses the exact 1-norm instead of a
    randomized estimate, so repeated calls give bit-identical results.
    """
    norm = float(abs(a).sum(axis=0).max())
    steps = max(1, math.ceil(norm))
    a = a / steps
    for _ in range(steps):
        term = v
        acc = v.copy()
        for k in range(1, 40):
            term = a @ term / k
            acc += term
            if np.abs(term).sum() <= 1e-17 * np.abs(acc).sum():
                break
        v = acc
    return v


def _evolve_birth_death(p: np.ndarray, quanta: float) -> tuple[np.ndarray, float]:
    """Apply the heating semigroup for ``rate * t = quanta`` to an
    unnormalized vector; returns (vector, mass pushed past n_max)."""
    mass = float(p.sum())
    if quanta == 0 or mass == 0:
        return p.copy(), 0.0
    out = _expm_action(_birth_death_generator(p.size - 1) * quanta, np.append(p, 0.0))
    out = np.clip(out, 0.0, None)
    lost = float(out[-1])
    body = out[:-1]
    # round-off: restore exact mass balance
    body *= (mass - lost) / body.sum()
    return body, lost


def heat(dist: MotionalDistribution, duration: float, process: HeatingProcess) -> MotionalDistribution:
    """Evolve under motional heating for ``duration`` seconds.

    ``birth_death`` integrates the master equation with rates
    ``rate * (n + 1)`` up and ``rate * n`` down, for which d(nbar)/dt equals
    ``rate`` exactly.  Mass that reaches beyond ``n_max`` is removed and
    counted in ``leakage``.  ``nbar_increment`` replaces the state by a
    thermal one with the increased mean.
    """
    if duration < 0:
        raise ValueError("duration must be >= 0")
    if duration == 0 or process.rate == 0:
        return dist
    if process.model is HeatingModel.NBAR_INCREMENT:
        target = dist.mean + process.rate * duration
        n_max = dist.n_max if thermal_tail(target, dist.n_max) < LEAKAGE_LIMIT else None
        return thermal_distribution(target, n_max)
    body, lost = _evolve_birth_death(dist.probs, process.rate * duration)
    return MotionalDistribution(body, dist.leakage + lost)


def _heat_state(state: SpinMotionState, duration: float, process: HeatingProcess | None) -> SpinMotionState:
    if process is None or duration <= 0 or process.rate == 0:
        return state
    if process.model is HeatingModel.NBAR_INCREMENT:
        raise ValueError("cooling sequences need the birth_death heating model")
    quanta = process.rate * duration
    dark, lost_d = _evolve_birth_death(state.dark, quanta)
    bright, lost_b = _evolve_birth_death(state.bright, quanta)
    return SpinMotionState(dark, bright, None, state.leakage + lost_d + lost_b)


@dataclass(frozen=True)
class CoolingResult:
    distributions: tuple[MotionalDistribution, ...]
    nbar_history: np.ndarray  # (pulses_applied + 1, n_modes)
    duration: float

    @property
    def measured(self) -> MotionalDistribution:
        return self.distributions[0]


def sideband_cool(dist, schedule: CoolingSchedule) -> CoolingResult:
    """Run the cooling loop over all configured modes.

    ``dist`` is one starting distribution shared by every mode or a sequence
    with one per mode.  Each mode heats for the whole sequence duration
    (pumping plus every pulse on every mode) when ``schedule.heating`` is set.
    The first mode is the measured one.
    """
    modes = schedule.modes
    if isinstance(dist, MotionalDistribution):
        dists = [dist] * len(modes)
    else:
        dists = list(dist)
        if len(dists) != len(modes):
            raise ValueError("need one starting distribution per mode")
    states = [SpinMotionState.prepare(d) for d in dists]
    if schedule.count_per_mode:
        order = [k for _ in range(schedule.iterations) for k in range(len(modes))]
    else:
        order = [i % len(modes) for i in range(schedule.iterations)]

    history = [[s.motional().mean for s in states]]
    elapsed = 0.0
    for k in order:
        nbar = states[k].motional().mean
        step_time = schedule.pump_time + pulse_duration(modes[k], schedule, nbar)
        states[k] = sideband_cool_step(states[k], modes[k], schedule)
        states = [_heat_state(s, step_time, schedule.heating) for s in states]
        elapsed += step_time
        history.append([s.motional().mean for s in states])
    return CoolingResult(tuple(s.motional() for s in states), np.array(history), elapsed)
