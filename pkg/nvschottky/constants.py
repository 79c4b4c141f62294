"""Physical constants, fixed to their CODATA values."""
import math
from dataclasses import dataclass

# Atomic density of diamond, used for ppm / ppb dopant concentrations.
DIAMOND_ATOMIC_DENSITY = 1.763e29  # m^-3

# Gyromagnetic ratio of the NV- electron spin.
NV_GYROMAGNETIC_RATIO = 28.024e9  # Hz / T


@dataclass(frozen=True)
class PhysicalConstants:
    q: float = 1.602176634e-19  # C
    k: float = 1.380649e-23  # J/K
    eps0: float = 8.8541878128e-12  # F/m

    def thermal_voltage(self, T):
        """kT/q in volts."""
        return self.k * T / self.q

    def permittivity(self, eps_s):
        return self.eps0 * eps_s


CONSTANTS = PhysicalConstants()


def thermal_voltage(T):
    """kT/q in volts; the one place the thermal voltage is computed."""
    return CONSTANTS.thermal_voltage(T)


def watts_to_dbm(watts):
    """Power in dBm, i.e. relative to 1 mW."""
    return 10 * math.log10(watts / 1e-3)
