"""Trajectory ensembles: seeding, parallel execution, and reduction.

Trajectories are fully independent work units. Each one derives its initial
bath phase from a counter-based seed mix of (base_seed, global trajectory
index, reservoir index), so results do not depend on execution order or
worker count; the reduction always runs in trajectory-index order, giving
bit-identical output for any number of workers.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernels
from .bath import DiscretizedBath, SpectralDensity, SpectralDensityFamily, \
    discretize
from .ehrenfest import StepConfig, assemble_propagation_inputs, \
    record_steps_for_grid
from .system import CorrectionKind, SystemSpec
from .units import DEFAULT_UNITS, UnitContext

__all__ = [
    "EnsembleConfig",
    "EnsembleResult",
    "EnsembleError",
    "PopulationDifference",
    "run_ensemble",
    "population_difference",
    "steady_difference",
    "scenario_build",
    "convergence_report",
    "SCENARIOS",
]

_STEADY_WINDOW_FRAC = 0.25


class EnsembleError(RuntimeError):
    pass


@dataclass(frozen=True)
class EnsembleConfig:
    """Ensemble controls. ``traj_offset`` shifts the global trajectory
    indices, which is how disjoint ensembles share a base seed."""

    n_traj: int = 8000
    base_seed: int = 12345
    traj_offset: int = 0
    t_final: float = 20.0
    n_record: int = 201
    step: StepConfig = field(default_factory=StepConfig)
    sampling: str = "wigner"          # "wigner" | "classical"
    initial_state: tuple | None = None  # defaults to |1> = e_0
    scenario: str = "custom"

    def __post_init__(self):
        if self.n_traj < 1:
            raise ValueError("n_traj must be >= 1")
        if self.sampling not in ("wigner", "classical"):
            raise ValueError("sampling must be 'wigner' or 'classical'")

    def record_steps(self) -> np.ndarray:
        n_steps = int(round(self.t_final / self.step.dt))
        steps = np.unique(np.rint(
            np.linspace(0.0, n_steps, self.n_record)).astype(np.int64))
        return steps

    def psi0(self, n_levels: int) -> np.ndarray:
        if self.initial_state is None:
            psi = np.zeros(n_levels, dtype=complex)
            psi[0] = 1.0
            return psi
        psi = np.asarray(self.initial_state, dtype=complex)
        if psi.shape != (n_levels,):
            raise ValueError("initial_state has the wrong length")
        nrm = np.linalg.norm(psi)
        if not math.isclose(nrm, 1.0, rel_tol=0, abs_tol=1e-9):
            raise ValueError("initial_state must be normalized")
        return psi


@dataclass(frozen=True)
class SteadySummary:
    """Window-averaged steady-state populations with trajectory-level
    covariance of the mean."""

    window_frac: float
    t_start: float
    populations: np.ndarray        # (n,)
    pop_cov: np.ndarray            # (n, n), covariance of the mean


@dataclass(frozen=True)
class EnsembleResult:
    grid: np.ndarray               # (S,)
    rho: np.ndarray                # (S, n, n) complex, mean over trajectories
    stderr: np.ndarray             # (S, n, n) real, std error per entry
    pop_cov: np.ndarray            # (S, n, n) real, covariance of mean pops
    n_traj: int
    n_valid: int
    norm_drift_stats: dict
    steady: SteadySummary
    stderr_defined: bool
    meta: dict

    @property
    def n_levels(self) -> int:
        return self.rho.shape[1]

    def populations(self) -> np.ndarray:
        return np.real(np.einsum("sii->si", self.rho))


@dataclass(frozen=True)
class PopulationDifference:
    t: np.ndarray
    value: np.ndarray
    stderr: np.ndarray
    reliable: np.ndarray           # False where rho_i + rho_j ~ noise floor


def _sample_chunk(base_seed, traj_offset, start, stop, sampling, baths,
                  offsets):
    """Initial (q, p) for global trajectory indices [start, stop)."""
    total = offsets[-1]
    q = np.empty((stop - start, total))
    p = np.empty((stop - start, total))
    for r, bath in enumerate(baths):
        if sampling == "wigner":
            sq, sp = bath.wigner_sigmas()
        else:
            sq, sp = bath.classical_sigmas()
        sl = slice(offsets[r], offsets[r + 1])
        for row, gi in enumerate(range(start, stop)):
            seq = np.random.SeedSequence(
                entropy=base_seed, spawn_key=(traj_offset + gi, r))
            rng = np.random.default_rng(seq)
            q[row, sl] = rng.standard_normal(bath.n_modes) * sq
            p[row, sl] = rng.standard_normal(bath.n_modes) * sp
    return q, p


def _run_chunk(task):
    (kernel_name, start, stop, base_seed, traj_offset, sampling, psi0,
     inputs, dt, n_steps, record_steps, renormalize, budget) = task
    kern = _kernels.get_kernel(kernel_name)
    q0, p0 = _sample_chunk(base_seed, traj_offset, start, stop, sampling,
                           inputs["baths"], inputs["res_offsets"])
    psi = np.broadcast_to(psi0, (stop - start, psi0.size))
    psi_rec, drift, valid, _, _ = kern.propagate_batch(
        psi, inputs["h0"], inputs["m_mats"], inputs["v_mats"],
        inputs["omegas"], inputs["gs"], inputs["res_index"],
        inputs["res_offsets"], q0, p0, dt, n_steps, record_steps,
        renormalize, budget)
    return start, psi_rec, drift, valid


def run_ensemble(system: SystemSpec, baths, cfg: EnsembleConfig,
                 workers: int = 1, kernel: str | None = None,
                 units: UnitContext = DEFAULT_UNITS) -> EnsembleResult:
    """Propagate cfg.n_traj independent trajectories and accumulate the
    reduced density matrix with standard errors.

    Raises EnsembleError when more than 1% of trajectories are invalid.
    """
    inputs = assemble_propagation_inputs(system, baths, cfg.step, units)
    n = system.n_levels
    n_steps = int(round(cfg.t_final / cfg.step.dt))
    record_steps = cfg.record_steps()
    grid = record_steps * cfg.step.dt
    psi0 = cfg.psi0(n)

    n_traj = cfg.n_traj
    workers = max(1, int(workers))
    n_chunks = min(n_traj, workers)
    bounds = np.linspace(0, n_traj, n_chunks + 1).astype(int)
    tasks = [
        (kernel, int(a), int(b), cfg.base_seed, cfg.traj_offset,
         cfg.sampling, psi0, inputs, cfg.step.dt, n_steps, record_steps,
         cfg.step.renormalize_effective, cfg.step.norm_drift_budget)
        for a, b in zip(bounds[:-1], bounds[1:]) if b > a
    ]

    psi_rec = np.empty((n_traj, record_steps.size, n), dtype=complex)
    drift = np.empty(n_traj)
    valid = np.empty(n_traj, dtype=bool)

    if workers == 1:
        results = map(_run_chunk, tasks)
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_chunk, tasks))
    for start, rec, dr, va in results:
        stop = start + rec.shape[0]
        psi_rec[start:stop] = rec
        drift[start:stop] = dr
        valid[start:stop] = va

    n_valid = int(valid.sum())
    if n_valid < n_traj * 0.99:
        raise EnsembleError(
            f"{n_traj - n_valid}/{n_traj} trajectories invalid "
            f"(> 1%); max norm drift {np.nanmax(drift):.3g}, budget "
            f"{cfg.step.norm_drift_budget:.3g}")

    psi_ok = psi_rec[valid]      # boolean mask keeps index order
    reduced = _reduce(psi_ok, grid, cfg.t_final)
    drift_ok = drift[valid]
    meta = {
        "base_seed": cfg.base_seed,
        "traj_offset": cfg.traj_offset,
        "n_traj": n_traj,
        "scenario": cfg.scenario,
        "sampling": cfg.sampling,
        "t_final": cfg.t_final,
        "dt": cfg.step.dt,
        "n_record": int(record_steps.size),
        "correction": cfg.step.correction_kind.value,
        "renormalize": cfg.step.renormalize_effective,
        "norm_drift_budget": cfg.step.norm_drift_budget,
        "kernel": _kernels.get_kernel(kernel).KERNEL_NAME,
    }
    return EnsembleResult(
        grid=grid, rho=reduced["rho"], stderr=reduced["stderr"],
        pop_cov=reduced["pop_cov"], n_traj=n_traj, n_valid=n_valid,
        norm_drift_stats={
            "max": float(np.max(drift_ok)) if n_valid else float("nan"),
            "mean": float(np.mean(drift_ok)) if n_valid else float("nan"),
        },
        steady=reduced["steady"], stderr_defined=n_valid > 1, meta=meta)


def _reduce(psi, grid, t_final):
    """Deterministic index-order reduction of stacked snapshots (M, S, n)."""
    m, s, n = psi.shape
    rho = np.einsum("tsi,tsj->sij", psi, psi.conj(), optimize=False) / m

    stderr = np.full((s, n, n), np.nan)
    pop_cov = np.full((s, n, n), np.nan)
    pops = np.abs(psi) ** 2                       # (M, S, n)
    if m > 1:
        # per-entry spread of psi_i psi_j^*, accumulated in blocks over time
        for lo in range(0, s, 16):
            hi = min(lo + 16, s)
            x = psi[:, lo:hi, :, None] * psi[:, lo:hi, None, :].conj()
            var = x.real.var(axis=0, ddof=1) + x.imag.var(axis=0, ddof=1)
            stderr[lo:hi] = np.sqrt(var / m)
        pbar = pops.mean(axis=0)
        cross = np.einsum("tsi,tsj->sij", pops, pops, optimize=False) / m
        pop_cov = (cross - np.einsum("si,sj->sij", pbar, pbar)) * (
            m / (m - 1)) / m

    t_start = t_final * (1.0 - _STEADY_WINDOW_FRAC)
    widx = np.nonzero(grid >= t_start - 1e-12)[0]
    pwin = pops[:, widx, :].mean(axis=1)          # (M, n)
    steady_pop = pwin.mean(axis=0)
    if m > 1:
        dev = pwin - steady_pop
        steady_cov = (dev.T @ dev) / (m - 1) / m
    else:
        steady_cov = np.full((n, n), np.nan)
    steady = SteadySummary(window_frac=_STEADY_WINDOW_FRAC,
                           t_start=float(grid[widx[0]]),
                           populations=steady_pop, pop_cov=steady_cov)
    return {"rho": rho, "stderr": stderr, "pop_cov": pop_cov, "steady": steady}


def population_difference(result: EnsembleResult, i: int, j: int,
                          normalized: bool = False) -> PopulationDifference:
    """Time series rho_i - rho_j (optionally normalized by rho_i + rho_j)
    with propagated standard errors from the population covariance."""
    n = result.n_levels
    if not (0 <= i < n and 0 <= j < n) or i == j:
        raise ValueError(f"invalid level pair ({i}, {j})")
    pops = result.populations()
    a, b = pops[:, i], pops[:, j]
    c_ii = result.pop_cov[:, i, i]
    c_jj = result.pop_cov[:, j, j]
    c_ij = result.pop_cov[:, i, j]
    if not normalized:
        value = a - b
        var = c_ii + c_jj - 2.0 * c_ij
        reliable = np.ones_like(value, dtype=bool)
    else:
        ssum = a + b
        value = np.divide(a - b, ssum, out=np.zeros_like(a),
                          where=ssum != 0.0)
        var = 4.0 * (b * b * c_ii + a * a * c_jj - 2.0 * a * b * c_ij)
        var = np.divide(var, ssum ** 4, out=np.full_like(a, np.nan),
                        where=ssum != 0.0)
        sum_err = np.sqrt(np.maximum(c_ii + c_jj + 2.0 * c_ij, 0.0))
        reliable = ssum > 10.0 * sum_err
    return PopulationDifference(t=result.grid, value=value,
                                stderr=np.sqrt(np.maximum(var, 0.0)),
                                reliable=reliable)


def steady_difference(result: EnsembleResult, i: int, j: int,
                      normalized: bool = False) -> tuple[float, float]:
    """Steady-state estimate: the population-difference series averaged over
    the final window, with a trajectory-level standard error (delta method
    on the window-averaged populations)."""
    series = population_difference(result, i, j, normalized)
    widx = result.grid >= result.steady.t_start - 1e-12
    value = float(series.value[widx].mean())
    pops = result.steady.populations
    cov = result.steady.pop_cov
    a, b = pops[i], pops[j]
    c_ii, c_jj, c_ij = cov[i, i], cov[j, j], cov[i, j]
    if not normalized:
        var = c_ii + c_jj - 2.0 * c_ij
    else:
        var = 4.0 * (b * b * c_ii + a * a * c_jj - 2.0 * a * b * c_ij) \
            / (a + b) ** 4
    return value, float(math.sqrt(max(var, 0.0)))


@dataclass(frozen=True)
class ConvergenceReport:
    max_sigma: float
    converged: bool
    n_compared: int


def convergence_report(result_half: EnsembleResult,
                       result_full: EnsembleResult,
                       threshold: float = 3.0) -> ConvergenceReport:
    """Compare two independently seeded ensembles entry by entry.

    The runs must use disjoint trajectory streams: either different base
    seeds, or non-overlapping [traj_offset, traj_offset + n_traj) ranges.
    """
    ma, mb = result_half.meta, result_full.meta
    if (ma["base_seed"], ma["traj_offset"], ma["n_traj"]) == \
            (mb["base_seed"], mb["traj_offset"], mb["n_traj"]):
        raise ValueError("the two results are the same trajectory stream")
    if ma["base_seed"] == mb["base_seed"]:
        a0, a1 = ma["traj_offset"], ma["traj_offset"] + ma["n_traj"]
        b0, b1 = mb["traj_offset"], mb["traj_offset"] + mb["n_traj"]
        if a0 < b1 and b0 < a1:
            raise ValueError(
                "trajectory index ranges overlap with a shared base seed; "
                "use different seeds or disjoint traj_offset ranges")
    if result_half.grid.shape != result_full.grid.shape or \
            not np.allclose(result_half.grid, result_full.grid):
        raise ValueError("record grids differ")
    if not (result_half.stderr_defined and result_full.stderr_defined):
        raise ValueError("both results need defined standard errors")
    diff = np.abs(result_half.rho - result_full.rho)
    comb = np.sqrt(result_half.stderr ** 2 + result_full.stderr ** 2)
    with np.errstate(invalid="ignore"):
        sigma = np.where(diff > 0, diff / np.where(comb > 0, comb, np.inf), 0.0)
    max_sigma = float(np.nanmax(sigma))
    return ConvergenceReport(max_sigma=max_sigma,
                             converged=max_sigma <= threshold,
                             n_compared=int(np.isfinite(sigma).sum()))


# Paper experiment presets. One shared reservoir recipe: exponential-cutoff
# Ohmic bath, eta = 10 (dimensionless), omega_c = 10 rad/ps, 400 modes up to
# 5 omega_c. The norm-drift budget is uncapped here: at this coupling
# strength the corrected (non-Hermitian) propagation accumulates per-step
# renormalizations of order 1e-3, so a fixed small budget would abort every
# trajectory.
_PAPER_BATH = dict(eta=10.0, omega_c=10.0, n_modes=400, omega_max_factor=5.0)


def _paper_bath(label: str, temperature: float,
                units: UnitContext) -> DiscretizedBath:
    sd = SpectralDensity(SpectralDensityFamily.OHMIC_EXP,
                         eta=_PAPER_BATH["eta"], omega_c=_PAPER_BATH["omega_c"])
    return discretize(sd, _PAPER_BATH["n_modes"],
                      _PAPER_BATH["omega_max_factor"] * sd.omega_c,
                      temperature=temperature, label=label, units=units)


def _three_level_couplings(v13: float, v23: float) -> np.ndarray:
    v = np.zeros((3, 3))
    v[0, 2] = v[2, 0] = v13
    v[1, 2] = v[2, 1] = v23
    return v


SCENARIOS = ("two_level_paper", "three_level_case1", "three_level_case2",
             "three_level_case3", "two_temperature")


def scenario_build(scenario: str, *, n_traj: int | None = None,
                   base_seed: int = 12345,
                   correction_kind: CorrectionKind = CorrectionKind.STANDARD_HARMONIC,
                   units: UnitContext = DEFAULT_UNITS):
    """Return (system, baths, cfg) for one of the canned experiments:

    two_level_paper    eps = (0, 100) cm^-1, V12 = 1, one 300 K bath
    three_level_caseN  eps = (0, 100, 120) cm^-1 with (V13, V23) in
                       {(1,1), (3,1), (1,3)}, one 300 K bath
    two_temperature    three levels, V13 -> 6000 K bath, V23 -> 300 K bath
    """
    step = StepConfig(dt=1e-3, correction_kind=correction_kind,
                      norm_drift_budget=math.inf)
    cfg = EnsembleConfig(n_traj=8000 if n_traj is None else n_traj,
                         base_seed=base_seed, t_final=20.0, n_record=201,
                         step=step, scenario=scenario)
    if scenario == "two_level_paper":
        system = SystemSpec(epsilon_cm1=(0.0, 100.0),
                            couplings=[("bath", [[0.0, 1.0], [1.0, 0.0]])])
        baths = [_paper_bath("bath", 300.0, units)]
    elif scenario in ("three_level_case1", "three_level_case2",
                      "three_level_case3"):
        v13, v23 = {"three_level_case1": (1.0, 1.0),
                    "three_level_case2": (3.0, 1.0),
                    "three_level_case3": (1.0, 3.0)}[scenario]
        system = SystemSpec(epsilon_cm1=(0.0, 100.0, 120.0),
                            couplings=[("bath",
                                        _three_level_couplings(v13, v23))])
        baths = [_paper_bath("bath", 300.0, units)]
    elif scenario == "two_temperature":
        v_hot = np.zeros((3, 3))
        v_hot[0, 2] = v_hot[2, 0] = 1.0
        v_cold = np.zeros((3, 3))
        v_cold[1, 2] = v_cold[2, 1] = 1.0
        system = SystemSpec(epsilon_cm1=(0.0, 100.0, 120.0),
                            couplings=[("hot", v_hot), ("cold", v_cold)])
        baths = [_paper_bath("hot", 6000.0, units),
                 _paper_bath("cold", 300.0, units)]
    else:
        raise ValueError(f"unknown scenario {scenario!r}; "
                         f"choose from {SCENARIOS}")
    return system, baths, cfg
