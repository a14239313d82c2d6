"""Multilevel system Hamiltonian and detailed-balance-modified couplings.

An N-level system with level energies eps_i and coherent couplings J_ij is
coupled bilinearly to one or more harmonic reservoirs, each through a real
symmetric matrix V. Detailed balance is restored in the mean-field propagation
by rescaling V element-wise with a frequency-dependent quantum correction
factor evaluated at the transition frequency each element mediates.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .units import DEFAULT_UNITS, UnitContext

__all__ = [
    "CorrectionKind",
    "SystemSpec",
    "ModifiedCoupling",
    "quantum_correction_factor",
    "build_hamiltonian0",
    "modify_coupling",
]


class CorrectionKind(enum.Enum):
    """Which quantum correction factor multiplies the classical spectrum.

    STANDARD_HARMONIC, 2/(1 + exp(-beta hbar w)), satisfies the detailed
    balance identity C(w) = exp(beta hbar w) C(-w) exactly. PAPER_LITERAL,
    1/(1 + 2 exp(-beta hbar w)), only approaches it asymptotically (and is off
    by a constant factor 2 in the rate ratio even then); it is kept behind a
    switch for literal reproduction. NONE applies no correction.
    """

    NONE = "none"
    PAPER_LITERAL = "paper_literal"
    STANDARD_HARMONIC = "standard_harmonic"


def quantum_correction_factor(omega, beta_hbar: float,
                              kind: CorrectionKind) -> float | np.ndarray:
    """Correction factor Q(omega) turning C_cl(omega) into C(omega).

    Parameters
    ----------
    omega : float or ndarray
        Angular frequency, rad/ps. Positive means energy released to the bath.
    beta_hbar : float
        hbar/kT in ps. May be inf (T = 0 limit).
    kind : CorrectionKind

    Returns
    -------
    float or ndarray
        NONE -> 1; PAPER_LITERAL -> 1/(1 + 2 e^{-x}); STANDARD_HARMONIC ->
        2/(1 + e^{-x}), with x = beta_hbar * omega. Limits at x -> +-inf are
        handled without overflow.
    """
    if kind is CorrectionKind.NONE:
        return np.ones_like(np.asarray(omega, dtype=float)) if np.ndim(omega) else 1.0

    x = np.multiply(beta_hbar, omega, dtype=float)
    # beta = inf at omega = 0 gives nan; use the symmetric-point value x = 0.
    x = np.where(np.isnan(x), 0.0, x)

    expm = np.exp(-np.abs(x))  # always <= 1, no overflow
    if kind is CorrectionKind.PAPER_LITERAL:
        # x >= 0: 1/(1 + 2 e^{-x});  x < 0: e^{x}/(e^{x} + 2)
        pos = 1.0 / (1.0 + 2.0 * expm)
        neg = expm / (expm + 2.0)
    elif kind is CorrectionKind.STANDARD_HARMONIC:
        pos = 2.0 / (1.0 + expm)
        neg = 2.0 * expm / (expm + 1.0)
    else:  # pragma: no cover
        raise ValueError(f"unknown correction kind {kind!r}")
    out = np.where(x >= 0.0, pos, neg)
    return float(out) if np.ndim(omega) == 0 else out


def _as_square(mat, n: int, name: str) -> np.ndarray:
    arr = np.asarray(mat, dtype=float)
    if arr.shape != (n, n):
        raise ValueError(f"{name} must be {n}x{n}, got {arr.shape}")
    return arr


@dataclass(frozen=True)
class SystemSpec:
    """N-level system with per-reservoir bilinear coupling patterns.

    Parameters
    ----------
    epsilon_cm1 : sequence of float
        Level energies in cm^-1. Indices are identity; no ordering assumed.
    couplings : sequence of (str, array_like)
        One (reservoir label, V matrix) pair per reservoir. V is real
        symmetric and dimensionless; zero diagonal unless ``allow_dephasing``.
    j_cm1 : array_like, optional
        Hermitian coherent coupling matrix in cm^-1 (zero diagonal used as
        given; defaults to no coherent coupling).
    """

    epsilon_cm1: tuple
    couplings: tuple
    j_cm1: tuple | None = None
    allow_dephasing: bool = False

    def __init__(self, epsilon_cm1: Sequence[float],
                 couplings: Sequence[tuple],
                 j_cm1=None, allow_dephasing: bool = False):
        eps = tuple(float(e) for e in epsilon_cm1)
        n = len(eps)
        if n < 2:
            raise ValueError("need at least two levels")
        coup = []
        for label, v in couplings:
            varr = _as_square(v, n, f"V[{label}]")
            if not np.allclose(varr, varr.T, atol=1e-12):
                raise ValueError(f"V[{label}] must be symmetric")
            if not allow_dephasing and np.any(np.abs(np.diag(varr)) > 0.0):
                raise ValueError(
                    f"V[{label}] has diagonal (dephasing) entries; "
                    "pass allow_dephasing=True to enable them")
            coup.append((str(label), tuple(map(tuple, varr))))
        j = None
        if j_cm1 is not None:
            jarr = np.asarray(j_cm1, dtype=complex)
            if jarr.shape != (n, n):
                raise ValueError(f"J must be {n}x{n}, got {jarr.shape}")
            if not np.allclose(jarr, jarr.conj().T, atol=1e-12):
                raise ValueError("J must be Hermitian")
            j = tuple(map(tuple, jarr))
        object.__setattr__(self, "epsilon_cm1", eps)
        object.__setattr__(self, "couplings", tuple(coup))
        object.__setattr__(self, "j_cm1", j)
        object.__setattr__(self, "allow_dephasing", bool(allow_dephasing))

    @property
    def n_levels(self) -> int:
        return len(self.epsilon_cm1)

    @property
    def epsilon(self) -> np.ndarray:
        return np.array(self.epsilon_cm1, dtype=float)

    @property
    def reservoir_labels(self) -> tuple:
        return tuple(label for label, _ in self.couplings)

    def coupling_matrix(self, label: str) -> np.ndarray:
        for lab, v in self.couplings:
            if lab == label:
                return np.array(v, dtype=float)
        raise KeyError(f"no coupling for reservoir {label!r}")

    @property
    def j_matrix(self) -> np.ndarray:
        if self.j_cm1 is None:
            return np.zeros((self.n_levels, self.n_levels), dtype=complex)
        return np.array(self.j_cm1, dtype=complex)


@dataclass(frozen=True)
class ModifiedCoupling:
    """Detailed-balance-rescaled coupling matrix.

    ``matrix[i, j] = V[i, j] * Q(omega_ji)`` with omega_ji =
    (eps_j - eps_i)/hbar: the element transferring amplitude j -> i carries
    the factor at the energy released to the bath, so downhill transitions
    are enhanced and uphill ones suppressed.

    The factor enters at full power, not as a square root. For the
    non-Hermitian propagation the population gain of level i scales with
    M_ij^2 but the loss terms scale with the geometric mean M_ij M_ji, so
    the steady-state population ratio follows the element ratio M_ij / M_ji
    itself; Q(w)/Q(-w) = exp(beta hbar w) then lands the renormalized
    ensemble on the Boltzmann distribution. Generally non-symmetric, which
    makes the effective Hamiltonian non-Hermitian; the propagator owns the
    renormalization policy.
    """

    matrix: np.ndarray
    base: np.ndarray
    beta_hbar: float
    factor_kind: CorrectionKind

    def __post_init__(self):
        self.matrix.flags.writeable = False
        self.base.flags.writeable = False


def build_hamiltonian0(spec: SystemSpec,
                       units: UnitContext = DEFAULT_UNITS) -> np.ndarray:
    """Bare system Hamiltonian H0 = diag(eps) + J in rad/ps (hbar = 1)."""
    h0 = np.diag(units.to_angfreq(spec.epsilon)).astype(complex)
    h0 += units.to_angfreq(spec.j_matrix)
    return h0


def modify_coupling(v, epsilon_cm1, temperature_k: float,
                    kind: CorrectionKind,
                    units: UnitContext = DEFAULT_UNITS) -> ModifiedCoupling:
    """Rescale a coupling matrix by the square-root correction factor.

    Parameters
    ----------
    v : array_like
        Real symmetric coupling pattern.
    epsilon_cm1 : array_like
        Level energies, cm^-1.
    temperature_k : float
        Reservoir temperature; each reservoir's matrix is built with its own
        beta.
    kind : CorrectionKind
    """
    varr = np.asarray(v, dtype=float)
    eps = units.to_angfreq(np.asarray(epsilon_cm1, dtype=float))
    beta_hbar = units.beta_hbar(temperature_k)
    if kind is CorrectionKind.NONE:
        m = varr.copy()
    else:
        # omega_ji = eps_j - eps_i for element (i, j)
        omega = eps[None, :] - eps[:, None]
        m = varr * quantum_correction_factor(omega, beta_hbar, kind)
    return ModifiedCoupling(matrix=m, base=varr.copy(),
                            beta_hbar=beta_hbar, factor_kind=kind)
