"""Bloch-Redfield reference solver.

Second-order (weak-coupling) master equation for the reduced density matrix,
driven by the bath correlation spectrum C(w) = Q(w) C_cl(w) with
C_cl(w) = 2 kT J(|w|)/|w|. Serves as the oracle the trajectory ensembles are
judged against: with the standard-harmonic correction its steady state is the
Boltzmann distribution for any coupling strength.

Rate convention: k = |V|^2 C(w) / hbar^2 with C(w) the full Fourier transform
of <Q(t)Q(0)>; the half-Fourier transform entering the tensor is then
C(w)/2 + i Lambda(w), and only the real part feeds the rates by default.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .bath import SpectralDensity
from .system import CorrectionKind, SystemSpec, quantum_correction_factor
from .units import DEFAULT_UNITS, UnitContext

__all__ = [
    "CorrelationSpectrum",
    "RedfieldModel",
    "correlation_value",
    "golden_rule_rates",
    "assemble_tensor",
    "integrate_rho",
    "boltzmann_reference",
    "two_temperature_reference",
    "RedfieldIntegrationError",
]


class RedfieldIntegrationError(RuntimeError):
    pass


@dataclass(frozen=True)
class CorrelationSpectrum:
    """Bath correlation spectrum C(w) for one reservoir."""

    sd: SpectralDensity
    temperature: float
    correction_kind: CorrectionKind = CorrectionKind.STANDARD_HARMONIC
    units: UnitContext = DEFAULT_UNITS

    @property
    def kt(self) -> float:
        return self.units.kt_angfreq(self.temperature)

    @property
    def beta_hbar(self) -> float:
        return self.units.beta_hbar(self.temperature)

    def classical(self, omega):
        """C_cl(w) = 2 kT J(|w|)/|w|, even in w, finite at w = 0."""
        return 2.0 * self.kt * self.sd.j_over_omega(omega)

    def value(self, omega):
        """Quantum-corrected spectrum Q(w) C_cl(w)."""
        q = quantum_correction_factor(omega, self.beta_hbar,
                                      self.correction_kind)
        return q * self.classical(omega)

    def lamb_shift(self, omega: float, cutoff_factor: float = 80.0) -> float:
        """Imaginary part of the half-Fourier transform,
        Lambda(w) = (1/2pi) PV int C(w')/(w - w') dw' (diagnostic only)."""
        span = cutoff_factor * self.sd.omega_c + 4.0 * abs(omega)
        val, _ = integrate.quad(self.value, -span, span,
                                weight="cauchy", wvar=omega, limit=400)
        return -val / (2.0 * math.pi)


def correlation_value(spectrum: CorrelationSpectrum, omega):
    """C(w) per the CorrelationSpectrum invariants (module-level convenience)."""
    return spectrum.value(omega)


def golden_rule_rates(eps1_cm1: float, eps2_cm1: float, v12: float,
                      spectrum: CorrelationSpectrum) -> tuple[float, float]:
    """Two-level rates (k_up, k_down) between levels at eps1 < eps2.

    k_down = |V12|^2 C(+|w|) (upper -> lower, energy released to the bath),
    k_up = |V12|^2 C(-|w|). Under the standard-harmonic correction
    k_up/k_down = exp(-beta hbar |w|) exactly.
    """
    if eps1_cm1 == eps2_cm1:
        raise ValueError("levels must be non-degenerate")
    w = abs(spectrum.units.to_angfreq(eps2_cm1 - eps1_cm1))
    k_down = v12 * v12 * spectrum.value(w)
    k_up = v12 * v12 * spectrum.value(-w)
    return float(k_up), float(k_down)


@dataclass(frozen=True)
class RedfieldModel:
    """Assembled generator: d vec(rho)/dt = L vec(rho) in the site basis."""

    eps_angfreq: np.ndarray
    liouvillian: np.ndarray
    n_levels: int
    include_imaginary: bool

    def derivative(self, rho: np.ndarray) -> np.ndarray:
        return (self.liouvillian @ rho.reshape(-1)).reshape(rho.shape)


def assemble_tensor(system: SystemSpec, spectra,
                    include_imaginary: bool = False,
                    units: UnitContext = DEFAULT_UNITS) -> RedfieldModel:
    """Build the full (non-secular) Redfield generator.

    Parameters
    ----------
    system : SystemSpec
        Must be diagonal in the working basis (J = 0); rotate to the
        eigenbasis first otherwise.
    spectra : CorrelationSpectrum or mapping label -> CorrelationSpectrum
        One spectrum per reservoir; a single spectrum is applied to all.
    include_imaginary : bool
        Include the principal-value (Lamb-shift) part of the half-Fourier
        transform. Off by default; only the real parts set the rates.

    The element R_{ab,cd}(w) = sum_res V_ab V_cd Gamma_res(w) with
    Gamma(w) = C(w)/2 [+ i Lambda(w)] enters the equation of motion

        d rho_ij/dt = -i w_ij rho_ij
            - sum_kl [ R_{ik,kl}(w_lk) rho_lj + R*_{jl,lk}(w_kl) rho_ik
                       - (R_{lj,ik}(w_ki) + R*_{ki,jl}(w_lj)) rho_kl ]

    equivalent to d rho/dt = -i[H0, rho] - [V, Lam rho - rho Lam^dag] with
    Lam_ab = V_ab Gamma(w_ba), which preserves trace and Hermiticity exactly
    (including the population-coherence interference terms that appear when
    two levels relax through a shared channel).
    """
    if system.j_cm1 is not None and np.any(np.abs(system.j_matrix) > 0):
        raise ValueError("assemble_tensor needs a diagonal H0; "
                         "rotate to the eigenbasis first")
    n = system.n_levels
    eps = units.to_angfreq(system.epsilon)
    labels = system.reservoir_labels
    if isinstance(spectra, CorrelationSpectrum):
        spectra = {lab: spectra for lab in labels}
    missing = [lab for lab in labels if lab not in spectra]
    if missing:
        raise ValueError(f"no spectrum for reservoirs {missing}")

    vs = [system.coupling_matrix(lab) for lab in labels]
    specs = [spectra[lab] for lab in labels]

    for v in vs:
        nz = np.argwhere(np.abs(v) > 0)
        for a, b in nz:
            if a != b and eps[a] == eps[b]:
                warnings.warn(
                    f"degenerate levels {a}, {b} share a coupling; the "
                    "rate at w = 0 is secular-ambiguous", stacklevel=2)
                break

    def gamma(spec, w):
        g = 0.5 * spec.value(w)
        if include_imaginary:
            g = g + 1j * spec.lamb_shift(w)
        return g

    def big_r(a, b, c, d, w):
        tot = 0.0 + 0.0j
        for v, spec in zip(vs, specs):
            if v[a, b] != 0.0 and v[c, d] != 0.0:
                tot += v[a, b] * v[c, d] * gamma(spec, w)
        return tot

    def idx(i, j):
        return i * n + j

    liou = np.zeros((n * n, n * n), dtype=complex)
    for i in range(n):
        for j in range(n):
            liou[idx(i, j), idx(i, j)] += -1j * (eps[i] - eps[j])
            for k in range(n):
                for l in range(n):
                    w_lk = eps[l] - eps[k]
                    liou[idx(i, j), idx(l, j)] -= big_r(i, k, k, l, w_lk)
                    liou[idx(i, j), idx(i, k)] -= np.conj(
                        big_r(j, l, l, k, eps[k] - eps[l]))
                    liou[idx(i, j), idx(k, l)] += (
                        big_r(l, j, i, k, eps[k] - eps[i])
                        + np.conj(big_r(k, i, j, l, eps[l] - eps[j])))
    return RedfieldModel(eps_angfreq=eps, liouvillian=liou, n_levels=n,
                         include_imaginary=include_imaginary)


def integrate_rho(model: RedfieldModel, rho0: np.ndarray, t_final: float,
                  grid, dt: float = 1e-3, pop_tol: float = 1e-6,
                  max_halvings: int = 8) -> np.ndarray:
    """Integrate d vec(rho)/dt = L vec(rho) with fixed-step classic RK4.

    rho0 must be Hermitian with unit trace. Populations leaving
    [-pop_tol, 1 + pop_tol] flag a step instability; dt is halved and the
    integration restarted, up to ``max_halvings`` times.

    Returns rho on the grid, shape (len(grid), n, n).
    """
    rho0 = np.asarray(rho0, dtype=complex)
    n = model.n_levels
    if rho0.shape != (n, n):
        raise ValueError(f"rho0 must be {n}x{n}")
    if not np.allclose(rho0, rho0.conj().T, atol=1e-12):
        raise ValueError("rho0 must be Hermitian")
    if not math.isclose(abs(np.trace(rho0)), 1.0, rel_tol=0, abs_tol=1e-9):
        raise ValueError("rho0 must have unit trace")
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or np.any(grid < 0) or np.any(grid > t_final + 1e-12):
        raise ValueError("grid must lie within [0, t_final]")

    liou = model.liouvillian

    def attempt(h_target: float) -> np.ndarray:
        out = np.empty((grid.size, n, n), dtype=complex)
        v = rho0.reshape(-1).copy()
        t = 0.0
        gi = 0
        while gi < grid.size and math.isclose(grid[gi], t, rel_tol=0,
                                              abs_tol=1e-12):
            out[gi] = v.reshape(n, n)
            gi += 1
        for target in grid[gi:]:
            span = target - t
            m = max(1, int(math.ceil(span / h_target - 1e-12)))
            h = span / m
            for _ in range(m):
                k1 = liou @ v
                k2 = liou @ (v + 0.5 * h * k1)
                k3 = liou @ (v + 0.5 * h * k2)
                k4 = liou @ (v + h * k3)
                v = v + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            t = target
            pops = v.reshape(n, n).diagonal().real
            if pops.min() < -pop_tol or pops.max() > 1.0 + pop_tol \
                    or not np.all(np.isfinite(pops)):
                raise _Unstable()
            out[np.searchsorted(grid, target)] = v.reshape(n, n)
        return out

    h = dt
    for _ in range(max_halvings + 1):
        try:
            return attempt(h)
        except _Unstable:
            h *= 0.5
    raise RedfieldIntegrationError(
        f"integration unstable down to dt = {h:.3g}")


class _Unstable(Exception):
    pass


def boltzmann_reference(epsilons_cm1, temperature_k: float,
                        units: UnitContext = DEFAULT_UNITS) -> np.ndarray:
    """Normalized Boltzmann populations exp(-eps/kT)/Z."""
    if temperature_k <= 0:
        raise ValueError("temperature must be positive")
    eps = np.asarray(epsilons_cm1, dtype=float)
    w = np.exp(-(eps - eps.min()) / units.kt_cm1(temperature_k))
    return w / w.sum()


def two_temperature_reference(eps1_cm1: float, eps2_cm1: float,
                              eps3_cm1: float, t_hot_k: float,
                              t_cold_k: float,
                              units: UnitContext = DEFAULT_UNITS) -> np.ndarray:
    """Steady-state proportions when the 1<->3 channel sees a hot reservoir
    and the 2<->3 channel a cold one.

    Chain: rho1 = 1, rho3 = rho1 exp(-beta_hot (e3 - e1)),
    rho2 = rho3 exp(-beta_cold (e2 - e3)); returned normalized to unit sum.
    """
    if t_hot_k <= 0 or t_cold_k <= 0:
        raise ValueError("temperatures must be positive")
    b_hot = 1.0 / units.kt_cm1(t_hot_k)
    b_cold = 1.0 / units.kt_cm1(t_cold_k)
    rho1 = 1.0
    rho3 = rho1 * math.exp(-b_hot * (eps3_cm1 - eps1_cm1))
    rho2 = rho3 * math.exp(-b_cold * (eps2_cm1 - eps3_cm1))
    pops = np.array([rho1, rho2, rho3])
    return pops / pops.sum()
