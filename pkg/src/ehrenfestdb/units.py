"""Unit conventions and conversions.

Internally everything runs with hbar = 1: energies and angular frequencies in
rad/ps, time in ps. User-facing inputs are wavenumbers (cm^-1) and kelvin.
"""

from __future__ import annotations

from dataclasses import dataclass

# Speed of light in cm/ps.
_C_CM_PER_PS = 2.99792458e-2

#: rad/ps per cm^-1 (2 pi c with c in cm/ps).
CM1_TO_ANGFREQ = 2.0 * 3.141592653589793 * _C_CM_PER_PS

#: Boltzmann constant in cm^-1 per kelvin.
KB_CM1_PER_K = 0.695034800


@dataclass(frozen=True)
class UnitContext:
    """Physical constants fixing the internal unit system.

    Attributes
    ----------
    cm1_to_angfreq : float
        rad/ps per cm^-1.
    kB : float
        Boltzmann constant, cm^-1 per kelvin.
    """

    cm1_to_angfreq: float = CM1_TO_ANGFREQ
    kB: float = KB_CM1_PER_K

    def to_angfreq(self, energy_cm1):
        """cm^-1 -> rad/ps."""
        return energy_cm1 * self.cm1_to_angfreq

    def to_cm1(self, angfreq):
        """rad/ps -> cm^-1."""
        return angfreq / self.cm1_to_angfreq

    def kt_cm1(self, temperature_k: float) -> float:
        return self.kB * temperature_k

    def kt_angfreq(self, temperature_k: float) -> float:
        """Thermal energy kT in rad/ps."""
        return self.to_angfreq(self.kt_cm1(temperature_k))

    def beta_hbar(self, temperature_k: float) -> float:
        """hbar * beta in ps (hbar = 1 internally); inf at T = 0."""
        if temperature_k == 0.0:
            return float("inf")
        return 1.0 / self.kt_angfreq(temperature_k)


DEFAULT_UNITS = UnitContext()
