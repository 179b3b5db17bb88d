"""Beat-note bookkeeping for Raman transitions driven by two frequency combs.

Comb tooth pairs separated by ``n * omega_rep`` plus the AOM offset between
the two beams bridge the hyperfine splitting.  The aggregate drive of all
resonant tooth pairs is represented by a single Rabi frequency elsewhere.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

from . import constants
from .spin_motion import Branch

DEFAULT_REP_RATE = constants.TWO_PI * 76e6
DEFAULT_HARMONIC = 166


@dataclass(frozen=True)
class CombConfig:
    omega_rep: float = DEFAULT_REP_RATE  # rad/s
    delta_aom: float = 0.0  # rad/s
    harmonic_n: int = DEFAULT_HARMONIC
    delta_hf: float = constants.HYPERFINE_SPLITTING  # rad/s
    optical_detuning: float = -constants.TWO_PI * 395e9  # rad/s, red of the excited state

    def __post_init__(self):
        if not self.omega_rep > 0:
            raise ValueError("omega_rep must be > 0")
        if int(self.harmonic_n) != self.harmonic_n or self.harmonic_n < 1:
            raise ValueError("harmonic_n must be a positive integer")


def raman_resonance(config: CombConfig) -> float:
    """Two-photon detuning ``delta_aom + n * omega_rep - delta_hf`` (rad/s);
    zero drives the carrier resonantly."""
    return config.delta_aom + config.harmonic_n * config.omega_rep - config.delta_hf


def sideband_target(config: CombConfig, trap_freq: float, branch) -> float:
    """AOM difference frequency that puts the two-photon detuning on the
    requested transition: 0 (carrier), ``-trap_freq`` (red) or ``+trap_freq``
    (blue)."""
    b = Branch.parse(branch)
    if trap_freq < 0:
        raise ValueError("trap_freq must be >= 0")
    return config.delta_hf - config.harmonic_n * config.omega_rep + b.delta_n * trap_freq


def tuned(config: CombConfig, trap_freq: float, branch) -> CombConfig:
    return replace(config, delta_aom=sideband_target(config, trap_freq, branch))


def resonance_sensitivity(config: CombConfig) -> float:
    """d(two-photon detuning)/d(omega_rep), equal to the harmonic number."""
    return float(config.harmonic_n)


@dataclass(frozen=True)
class CombPlan:
    carrier_aom: float
    red_aom: float
    blue_aom: float
    comb_difference: float  # n * omega_rep, rad/s

    def as_rows(self):
        hz = 1 / constants.TWO_PI
        return [("carrier", self.carrier_aom * hz), ("red_sideband", self.red_aom * hz),
                ("blue_sideband", self.blue_aom * hz), ("n_omega_rep", self.comb_difference * hz)]


def plan(config: CombConfig, trap_freq: float) -> CombPlan:
    """AOM settings for carrier and both first sidebands of one mode."""
    return CombPlan(sideband_target(config, trap_freq, Branch.CARRIER),
                    sideband_target(config, trap_freq, Branch.RED),
                    sideband_target(config, trap_freq, Branch.BLUE),
                    config.harmonic_n * config.omega_rep)

