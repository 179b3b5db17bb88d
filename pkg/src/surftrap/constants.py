"""Physical constants (CODATA 2018) and species data used throughout the package."""

import math
from dataclasses import dataclass

HBAR = 1.054571817e-34  # J s
ELEMENTARY_CHARGE = 1.602176634e-19  # C
ATOMIC_MASS_UNIT = 1.66053906660e-27  # kg
ELECTRON_MASS = 9.1093837015e-31  # kg
SPEED_OF_LIGHT = 299792458.0  # m/s

# 171Yb neutral atomic mass in u; the singly charged ion loses one electron.
YB171_ATOMIC_MASS_U = 170.936323
YB171_ION_MASS = YB171_ATOMIC_MASS_U * ATOMIC_MASS_UNIT - ELECTRON_MASS

# 2S1/2 - 2P1/2 cooling/detection line
COOLING_WAVELENGTH = 369.5e-9  # m
COOLING_LINEWIDTH = 2 * math.pi * 19.6e6  # rad/s, natural linewidth of 2P1/2

HYPERFINE_SPLITTING = 2 * math.pi * 12.642812118e9  # rad/s

TWO_PI = 2 * math.pi


@dataclass(frozen=True)
class IonConstants:
    """Mass (kg), charge (C) and mode frequency (rad/s) of the trapped ion."""

    mass: float = YB171_ION_MASS
    charge: float = ELEMENTARY_CHARGE
    mode_frequency: float = TWO_PI * 2.1e6

    def __post_init__(self):
        if min(self.mass, self.charge, self.mode_frequency) <= 0:
            raise ValueError("ion constants must be positive")
