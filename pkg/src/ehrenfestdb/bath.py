"""Harmonic reservoirs: spectral densities, mode discretization, thermal
sampling, the memory kernel, and statistical diagnostics.

A reservoir is characterized by a spectral density J(w); discretization turns
it into N explicit modes (w_i, g_i) whose half-weighted inverse-square sum
reproduces the reorganization energy mu = (1/pi) int J(w)/w dw.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .units import DEFAULT_UNITS, UnitContext

__all__ = [
    "SpectralDensityFamily",
    "SpectralDensity",
    "DiscretizedBath",
    "BathPhase",
    "discretize",
    "wigner_sample",
    "classical_sample",
    "memory_kernel",
    "force_autocorrelation_check",
    "gaussian_noise_series",
    "NoiseCovarianceError",
]


class SpectralDensityFamily(enum.Enum):
    OHMIC_EXP = "ohmic_exp"
    DRUDE_LORENTZ = "drude_lorentz"


@dataclass(frozen=True)
class SpectralDensity:
    """Continuous spectral density J(w) for w >= 0.

    OHMIC_EXP:      J(w) = eta * w * exp(-w/w_c)
    DRUDE_LORENTZ:  J(w) = 2 * eta * w_c * w / (w^2 + w_c^2)

    eta is dimensionless, omega_c in rad/ps.
    """

    family: SpectralDensityFamily
    eta: float
    omega_c: float

    def __post_init__(self):
        if self.eta <= 0 or self.omega_c <= 0:
            raise ValueError("eta and omega_c must be positive")

    def j(self, omega):
        w = np.abs(np.asarray(omega, dtype=float))
        if self.family is SpectralDensityFamily.OHMIC_EXP:
            out = self.eta * w * np.exp(-w / self.omega_c)
        else:
            out = 2.0 * self.eta * self.omega_c * w / (w * w + self.omega_c ** 2)
        return float(out) if np.ndim(omega) == 0 else out

    def j_over_omega(self, omega):
        """J(|w|)/|w| with its finite w -> 0 limit."""
        w = np.abs(np.asarray(omega, dtype=float))
        if self.family is SpectralDensityFamily.OHMIC_EXP:
            out = self.eta * np.exp(-w / self.omega_c)
        else:
            out = 2.0 * self.eta * self.omega_c / (w * w + self.omega_c ** 2)
        return float(out) if np.ndim(omega) == 0 else out

    def reorganization_energy(self) -> float:
        """mu = (1/pi) int_0^inf J(w)/w dw, rad/ps."""
        if self.family is SpectralDensityFamily.OHMIC_EXP:
            return self.eta * self.omega_c / math.pi
        return self.eta

    def cumulative_weight(self, omega) -> np.ndarray:
        """F(w) = int_0^w J(w')/w' dw' (the reorganization integrand)."""
        w = np.asarray(omega, dtype=float)
        if self.family is SpectralDensityFamily.OHMIC_EXP:
            out = self.eta * self.omega_c * (1.0 - np.exp(-w / self.omega_c))
        else:
            out = 2.0 * self.eta * np.arctan(w / self.omega_c)
        return float(out) if np.ndim(omega) == 0 else out

    def kernel(self, t):
        """Continuum memory kernel (2/pi) int J(w) cos(wt)/w dw."""
        ts = np.asarray(t, dtype=float)
        if self.family is SpectralDensityFamily.OHMIC_EXP:
            out = (2.0 * self.eta / math.pi) * self.omega_c / (
                1.0 + (self.omega_c * ts) ** 2)
        else:
            out = 2.0 * self.eta * np.exp(-self.omega_c * np.abs(ts))
        return float(out) if np.ndim(t) == 0 else out


@dataclass(frozen=True)
class DiscretizedBath:
    """Explicit harmonic modes representing one thermal reservoir.

    omegas and gs are in rad/ps (with dimensionless mode coordinates);
    temperature in kelvin. ``provenance`` records how the modes were built.
    """

    omegas: np.ndarray
    gs: np.ndarray
    temperature: float
    label: str = "bath"
    provenance: dict = field(default_factory=dict)
    units: UnitContext = DEFAULT_UNITS

    def __post_init__(self):
        omegas = np.asarray(self.omegas, dtype=float)
        gs = np.asarray(self.gs, dtype=float)
        if omegas.ndim != 1 or gs.shape != omegas.shape:
            raise ValueError("omegas and gs must be 1-d and equally long")
        if np.any(omegas <= 0.0):
            raise ValueError("mode frequencies must be positive")
        if np.any(np.diff(omegas) <= 0.0):
            raise ValueError("mode frequencies must be strictly increasing")
        if self.temperature < 0.0:
            raise ValueError("temperature must be non-negative")
        omegas.flags.writeable = False
        gs.flags.writeable = False
        object.__setattr__(self, "omegas", omegas)
        object.__setattr__(self, "gs", gs)

    @property
    def n_modes(self) -> int:
        return self.omegas.size

    @property
    def kt(self) -> float:
        """Thermal energy in rad/ps."""
        return self.units.kt_angfreq(self.temperature)

    @property
    def beta_hbar(self) -> float:
        return self.units.beta_hbar(self.temperature)

    def reorganization_from_modes(self) -> float:
        """(1/2) sum g_i^2 / w_i^2."""
        return 0.5 * float(np.sum((self.gs / self.omegas) ** 2))

    def wigner_sigmas(self) -> tuple[np.ndarray, np.ndarray]:
        """Std devs of (q_i, p_i) under the thermal Wigner distribution."""
        half = 0.5 * self.beta_hbar * self.omegas
        tanh = np.tanh(half) if np.all(np.isfinite(half)) else np.ones_like(half)
        var_q = 1.0 / (2.0 * self.omegas * tanh)
        var_p = self.omegas / (2.0 * tanh)
        return np.sqrt(var_q), np.sqrt(var_p)

    def classical_sigmas(self) -> tuple[np.ndarray, np.ndarray]:
        kt = self.kt
        return np.sqrt(kt) / self.omegas, np.sqrt(kt) * np.ones_like(self.omegas)


@dataclass(frozen=True)
class BathPhase:
    """Classical phase-space point of one reservoir's modes."""

    q: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.q, dtype=float)
        p = np.asarray(self.p, dtype=float)
        if q.shape != p.shape or q.ndim != 1:
            raise ValueError("q and p must be 1-d arrays of equal length")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "p", p)


def discretize(sd: SpectralDensity, n_modes: int, omega_max: float, *,
               temperature: float, label: str = "bath",
               check_sum_rule: bool = True, sum_rule_rtol: float = 0.01,
               units: UnitContext = DEFAULT_UNITS) -> DiscretizedBath:
    """Discretize a spectral density into explicit modes.

    For the exponential-cutoff Ohmic family,

        w_i = -w_c log[1 - (i/N)(1 - e^{-w_m/w_c})],   i = 1..N
        g_i = w_i sqrt((2 eta / pi)(w_c / N)(1 - e^{-w_m/w_c}))

    which places modes at equal quantiles of J(w)/w and gives each equal
    reorganization weight. Other families use the same equal-weight rule
    through the closed-form cumulative weight F(w) = int_0^w J/w' dw':

        w_i = F^{-1}((i/N) F(w_m)),   g_i = w_i sqrt(2 F(w_m) / (pi N))

    The half-sum (1/2) sum g_i^2/w_i^2 then equals (1/pi) F(w_m) exactly, and
    matches the full reorganization energy up to the cutoff truncation loss.
    """
    if n_modes < 1:
        raise ValueError("n_modes must be >= 1")
    if omega_max <= 0.0:
        raise ValueError("omega_max must be positive")
    i = np.arange(1, n_modes + 1, dtype=float)
    if sd.family is SpectralDensityFamily.OHMIC_EXP:
        coverage = 1.0 - math.exp(-omega_max / sd.omega_c)
        arg = 1.0 - (i / n_modes) * coverage
        assert np.all(arg > 0.0)
        omegas = -sd.omega_c * np.log(arg)
        gs = omegas * math.sqrt(
            (2.0 * sd.eta / math.pi) * (sd.omega_c / n_modes) * coverage)
    elif sd.family is SpectralDensityFamily.DRUDE_LORENTZ:
        f_max = sd.cumulative_weight(omega_max)
        omegas = sd.omega_c * np.tan((i / n_modes) * f_max / (2.0 * sd.eta))
        gs = omegas * math.sqrt(2.0 * f_max / (math.pi * n_modes))
    else:  # pragma: no cover
        raise ValueError(f"unsupported family {sd.family!r}")

    bath = DiscretizedBath(
        omegas=omegas, gs=gs, temperature=temperature, label=label,
        provenance={
            "family": sd.family.value, "eta": sd.eta, "omega_c": sd.omega_c,
            "n_modes": int(n_modes), "omega_max": float(omega_max),
        },
        units=units)
    if check_sum_rule:
        mu = sd.reorganization_energy()
        rel = abs(bath.reorganization_from_modes() - mu) / mu
        if rel > sum_rule_rtol:
            raise ValueError(
                f"reorganization sum rule violated: |{bath.reorganization_from_modes():.6g}"
                f" - {mu:.6g}|/{mu:.6g} = {rel:.3%} > {sum_rule_rtol:.3%}; "
                "increase n_modes or omega_max")
    return bath


def wigner_sample(bath: DiscretizedBath, rng: np.random.Generator) -> BathPhase:
    """Draw (q, p) from the product thermal Wigner distribution.

    Each mode is an independent Gaussian with Var(q) = 1/(2 w tanh(bh w / 2))
    and Var(p) = w/(2 tanh(bh w / 2)) (hbar = 1).
    """
    if bath.temperature <= 0.0:
        raise ValueError("wigner_sample needs temperature > 0")
    sq, sp = bath.wigner_sigmas()
    return BathPhase(q=rng.standard_normal(bath.n_modes) * sq,
                     p=rng.standard_normal(bath.n_modes) * sp)


def classical_sample(bath: DiscretizedBath, rng: np.random.Generator) -> BathPhase:
    """Draw (q, p) from the classical Boltzmann distribution:
    Var(q) = kT/w^2, Var(p) = kT."""
    if bath.temperature <= 0.0:
        raise ValueError("classical_sample needs temperature > 0")
    sq, sp = bath.classical_sigmas()
    return BathPhase(q=rng.standard_normal(bath.n_modes) * sq,
                     p=rng.standard_normal(bath.n_modes) * sp)


def memory_kernel(bath: DiscretizedBath, t):
    """Friction kernel K(t) = sum_i (g_i/w_i)^2 cos(w_i t) of the bath."""
    ts = np.asarray(t, dtype=float)
    c = (bath.gs / bath.omegas) ** 2
    out = np.cos(np.multiply.outer(ts, bath.omegas)) @ c
    return float(out) if np.ndim(t) == 0 else out


@dataclass(frozen=True)
class FdtReport:
    """Monte-Carlo fluctuation-dissipation check <F(t)F(0)> vs kT K(t)."""

    t: np.ndarray
    estimate: np.ndarray
    target: np.ndarray
    stderr: np.ndarray
    n_samples: int

    @property
    def max_sigma(self) -> float:
        return float(np.max(np.abs(self.estimate - self.target) / self.stderr))


def force_autocorrelation_check(bath: DiscretizedBath, n_samples: int, t_grid,
                                rng: np.random.Generator,
                                sampler: Callable = classical_sample) -> FdtReport:
    """Estimate <F(t)F(0)> for the free bath and compare with kT K(t).

    F(t) = sum_i g_i [q_i(0) cos(w_i t) + (p_i(0)/w_i) sin(w_i t)] is the
    fluctuating force with zero system back-reaction. Classical sampling obeys
    <F(t)F(0)> = kT K(t) exactly in expectation; Wigner sampling reduces to it
    in the classical limit beta hbar w << 1.
    """
    ts = np.asarray(t_grid, dtype=float)
    q = np.empty((n_samples, bath.n_modes))
    p = np.empty((n_samples, bath.n_modes))
    for j in range(n_samples):
        phase = sampler(bath, rng)
        q[j] = phase.q
        p[j] = phase.p
    cos = np.cos(np.multiply.outer(ts, bath.omegas))    # (T, K)
    sin = np.sin(np.multiply.outer(ts, bath.omegas))
    f0 = q @ bath.gs                                    # (S,)
    ft = q @ (cos * bath.gs).T + p @ (sin * bath.gs / bath.omegas).T  # (S, T)
    prod = ft * f0[:, None]
    est = prod.mean(axis=0)
    err = prod.std(axis=0, ddof=1) / math.sqrt(n_samples)
    return FdtReport(t=ts, estimate=est, target=bath.kt * memory_kernel(bath, ts),
                     stderr=err, n_samples=n_samples)


class NoiseCovarianceError(ValueError):
    """Raised when a requested noise covariance is not positive semidefinite."""


def gaussian_noise_series(covariance, n_series: int,
                          rng: np.random.Generator,
                          psd_rtol: float = 1e-10) -> np.ndarray:
    """Generate stationary Gaussian series by covariance decomposition.

    Parameters
    ----------
    covariance : array_like
        C(t_k) on a uniform grid, defining a symmetric Toeplitz covariance.
    n_series : int
        Number of independent realizations.
    psd_rtol : float
        Eigenvalues below ``-psd_rtol * max(eigenvalue)`` fail the PSD check;
        small negatives from roundoff (rank-deficient kernels) are clipped.

    Returns
    -------
    ndarray, shape (n_series, len(covariance))
    """
    c = np.asarray(covariance, dtype=float)
    if c.ndim != 1 or c.size < 1:
        raise ValueError("covariance must be a non-empty 1-d array")
    n = c.size
    idx = np.abs(np.subtract.outer(np.arange(n), np.arange(n)))
    sigma = c[idx]
    evals, evecs = np.linalg.eigh(sigma)
    floor = -psd_rtol * max(evals.max(), 0.0)
    if evals.min() < floor:
        raise NoiseCovarianceError(
            f"covariance is not positive semidefinite: most negative "
            f"eigenvalue {evals.min():.6g}")
    evals = np.clip(evals, 0.0, None)
    factor = evecs * np.sqrt(evals)
    return rng.standard_normal((n_series, n)) @ factor.T
