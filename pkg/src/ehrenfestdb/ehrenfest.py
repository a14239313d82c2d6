"""Modified Ehrenfest propagation of a single trajectory.

The quantum amplitude evolves under H0 + sum_r M_r Q_r(t) with the
detailed-balance-modified couplings M_r; each reservoir's modes evolve by
velocity Verlet under the mean-field force -g_i z_r with z_r = <psi|V_r|psi>
evaluated with the original coupling (the correction only touches the quantum
step). The individual operations here are the readable reference path; the
batched hot loop lives in ``_kernels``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import expm

from . import _kernels
from .bath import BathPhase, DiscretizedBath
from .system import CorrectionKind, ModifiedCoupling, SystemSpec, \
    build_hamiltonian0, modify_coupling
from .units import DEFAULT_UNITS, UnitContext

__all__ = [
    "StepConfig",
    "TrajectoryState",
    "TrajectoryResult",
    "InvalidTrajectoryError",
    "collective_coordinate",
    "effective_hamiltonian",
    "step_quantum",
    "mean_field_displacement",
    "step_classical",
    "propagate_trajectory",
    "assemble_propagation_inputs",
]


class InvalidTrajectoryError(RuntimeError):
    """A trajectory produced non-finite amplitudes or blew its drift budget."""


@dataclass(frozen=True)
class StepConfig:
    """Propagation controls.

    renormalize=None means "on when a correction is active" (a non-Hermitian
    effective Hamiltonian does not conserve the norm). The drift budget bounds
    the accumulated |1 - ||psi||| before a trajectory is declared invalid.
    """

    dt: float = 1e-3
    correction_kind: CorrectionKind = CorrectionKind.STANDARD_HARMONIC
    renormalize: bool | None = None
    norm_drift_budget: float = 0.5

    def __post_init__(self):
        if self.dt <= 0.0:
            raise ValueError("dt must be positive")

    @property
    def renormalize_effective(self) -> bool:
        if self.renormalize is None:
            return self.correction_kind is not CorrectionKind.NONE
        return self.renormalize


@dataclass
class TrajectoryState:
    """System amplitude plus one classical phase-space point per reservoir."""

    psi: np.ndarray
    baths: list
    t: float = 0.0
    norm_drift: float = 0.0

    def __post_init__(self):
        self.psi = np.asarray(self.psi, dtype=complex)
        nrm = np.linalg.norm(self.psi)
        if not math.isclose(nrm, 1.0, rel_tol=0, abs_tol=1e-9):
            raise ValueError(f"psi must be normalized, got ||psi|| = {nrm}")


@dataclass(frozen=True)
class TrajectoryResult:
    grid: np.ndarray
    psis: np.ndarray            # (n_record, n_levels), NaN rows after failure
    norm_drift: float
    valid: bool
    final_baths: tuple = ()


def collective_coordinate(phase: BathPhase, bath: DiscretizedBath) -> float:
    """Q = sum_i g_i q_i for one reservoir."""
    return float(bath.gs @ phase.q)


def effective_hamiltonian(h0: np.ndarray, modified_couplings, qs) -> np.ndarray:
    """H_eff = H0 + sum_r M_r Q_r; non-Hermitian when a correction is active."""
    h = np.array(h0, dtype=complex)
    if len(modified_couplings) != len(qs):
        raise ValueError("need one collective coordinate per reservoir")
    for mod, q in zip(modified_couplings, qs):
        m = mod.matrix if isinstance(mod, ModifiedCoupling) else np.asarray(mod)
        if m.shape != h.shape:
            raise ValueError(f"coupling shape {m.shape} != H0 shape {h.shape}")
        h += m * q
    return h


def step_quantum(psi: np.ndarray, h_eff: np.ndarray, dt: float,
                 renormalize: bool = False) -> tuple[np.ndarray, float]:
    """psi(t+dt) = exp(-i H_eff dt) psi(t) by dense matrix exponential.

    Returns the new amplitude and the norm deviation |1 - ||psi'||| before
    any renormalization. Warns when ||H_eff|| dt is large enough that the
    frozen-Hamiltonian step is questionable.
    """
    a = np.asarray(h_eff, dtype=complex)
    norm_scale = float(np.abs(a).sum(axis=1).max()) * dt
    if norm_scale > 0.5:
        warnings.warn(f"||H_eff|| dt = {norm_scale:.3g} > 0.5; "
                      "consider a smaller dt", stacklevel=2)
    out = expm(-1j * a * dt) @ psi
    if not np.all(np.isfinite(out)):
        raise InvalidTrajectoryError("non-finite amplitudes in quantum step")
    nrm = float(np.linalg.norm(out))
    drift = abs(1.0 - nrm)
    if renormalize and nrm > 0.0:
        out = out / nrm
    return out, drift


def mean_field_displacement(psi: np.ndarray, v: np.ndarray) -> float:
    """z = <psi|V|psi> with the original (unmodified) coupling matrix."""
    return float(np.real(np.conj(psi) @ np.asarray(v) @ psi))


def step_classical(phase: BathPhase, bath: DiscretizedBath, z: float,
                   dt: float) -> BathPhase:
    """Velocity-Verlet step with acceleration a_i = -w_i^2 q_i - g_i z.

    The force is the gradient of the per-mode Hamiltonian
    p^2/2 + w^2 q^2/2 + g z q with z held constant over the step.
    """
    w2 = bath.omegas ** 2
    a0 = -(w2 * phase.q + bath.gs * z)
    q = phase.q + phase.p * dt + 0.5 * a0 * dt * dt
    a1 = -(w2 * q + bath.gs * z)
    p = phase.p + 0.5 * (a0 + a1) * dt
    return BathPhase(q=q, p=p)


def assemble_propagation_inputs(system: SystemSpec, baths, cfg: StepConfig,
                                units: UnitContext = DEFAULT_UNITS):
    """Flatten system + baths into the arrays the kernels consume.

    Returns a dict with h0, per-reservoir modified/original matrices, the
    concatenated mode arrays and reservoir index maps. Reservoir order follows
    ``system.couplings``; each bath's modified matrix uses its own
    temperature.
    """
    labels = system.reservoir_labels
    by_label = {b.label: b for b in baths}
    missing = [lab for lab in labels if lab not in by_label]
    if missing:
        raise ValueError(f"no bath provided for reservoirs {missing}")
    h0 = build_hamiltonian0(system, units)
    m_mats, v_mats, omegas, gs, offsets, res_index = [], [], [], [], [0], []
    for r, lab in enumerate(labels):
        bath = by_label[lab]
        v = system.coupling_matrix(lab)
        mod = modify_coupling(v, system.epsilon_cm1, bath.temperature,
                              cfg.correction_kind, units)
        m_mats.append(mod.matrix)
        v_mats.append(v)
        omegas.append(bath.omegas)
        gs.append(bath.gs)
        offsets.append(offsets[-1] + bath.n_modes)
        res_index.append(np.full(bath.n_modes, r, dtype=np.int64))
    return {
        "h0": h0,
        "m_mats": np.array(m_mats),
        "v_mats": np.array(v_mats),
        "omegas": np.concatenate(omegas),
        "gs": np.concatenate(gs),
        "res_offsets": np.array(offsets, dtype=np.int64),
        "res_index": np.concatenate(res_index),
        "bath_order": labels,
        "baths": [by_label[lab] for lab in labels],
    }


def record_steps_for_grid(record_grid, dt: float, n_steps: int) -> np.ndarray:
    """Map requested record times onto integer step indices."""
    grid = np.asarray(record_grid, dtype=float)
    steps = np.rint(grid / dt).astype(np.int64)
    if np.any(np.abs(steps * dt - grid) > 1e-9 * max(1.0, float(np.max(grid, initial=0.0)))):
        raise ValueError("record_grid times must be integer multiples of dt")
    if np.any(steps < 0) or np.any(steps > n_steps):
        raise ValueError("record_grid must lie in [0, t_final]")
    if np.any(np.diff(steps) <= 0):
        raise ValueError("record_grid must be strictly increasing")
    return steps


def propagate_trajectory(state: TrajectoryState, system: SystemSpec, baths,
                         cfg: StepConfig, t_final: float, record_grid,
                         kernel=None,
                         units: UnitContext = DEFAULT_UNITS) -> TrajectoryResult:
    """Run one trajectory through the four-stage loop, recording psi on a grid.

    ``state.baths`` must follow the reservoir order of ``system.couplings``.
    """
    inputs = assemble_propagation_inputs(system, baths, cfg, units)
    n_steps = int(round(t_final / cfg.dt))
    steps = record_steps_for_grid(record_grid, cfg.dt, n_steps)
    q0 = np.concatenate([ph.q for ph in state.baths])[None, :]
    p0 = np.concatenate([ph.p for ph in state.baths])[None, :]
    if q0.shape[1] != inputs["omegas"].size:
        raise ValueError("bath phase dimensions do not match the baths")
    kern = kernel if kernel is not None else _kernels.get_kernel()
    psi_rec, drift, valid, q, p = kern.propagate_batch(
        state.psi[None, :], inputs["h0"], inputs["m_mats"], inputs["v_mats"],
        inputs["omegas"], inputs["gs"], inputs["res_index"],
        inputs["res_offsets"], q0, p0, cfg.dt, n_steps, steps,
        cfg.renormalize_effective, cfg.norm_drift_budget)
    offs = inputs["res_offsets"]
    final = tuple(BathPhase(q=q[0, offs[r]:offs[r + 1]],
                            p=p[0, offs[r]:offs[r + 1]])
                  for r in range(len(offs) - 1))
    return TrajectoryResult(grid=steps * cfg.dt, psis=psi_rec[0],
                            norm_drift=float(drift[0]), valid=bool(valid[0]),
                            final_baths=final)
