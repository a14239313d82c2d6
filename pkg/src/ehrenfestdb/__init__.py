"""Detailed-balance-corrected Ehrenfest ensembles for multilevel systems
coupled to harmonic phonon reservoirs, plus a Bloch-Redfield reference
solver."""

from ._kernels import active_kernel_name, available_kernels, get_kernel
from .bath import BathPhase, DiscretizedBath, SpectralDensity, \
    SpectralDensityFamily, classical_sample, discretize, \
    force_autocorrelation_check, gaussian_noise_series, memory_kernel, \
    wigner_sample
from .ehrenfest import StepConfig, TrajectoryResult, TrajectoryState, \
    collective_coordinate, effective_hamiltonian, mean_field_displacement, \
    propagate_trajectory, step_classical, step_quantum
from .ensemble import EnsembleConfig, EnsembleResult, convergence_report, \
    population_difference, run_ensemble, scenario_build, steady_difference
from .redfield import CorrelationSpectrum, RedfieldModel, assemble_tensor, \
    boltzmann_reference, golden_rule_rates, integrate_rho, \
    two_temperature_reference
from .system import CorrectionKind, ModifiedCoupling, SystemSpec, \
    build_hamiltonian0, modify_coupling, quantum_correction_factor
from .units import DEFAULT_UNITS, UnitContext

__version__ = "0.1.0"
