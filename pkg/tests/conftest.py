import math

import numpy as np
import pytest

from ehrenfestdb.bath import SpectralDensity, SpectralDensityFamily, discretize
from ehrenfestdb.system import SystemSpec


@pytest.fixture(scope="session")
def paper_sd():
    return SpectralDensity(SpectralDensityFamily.OHMIC_EXP, eta=10.0,
                           omega_c=10.0)


@pytest.fixture(scope="session")
def paper_bath(paper_sd):
    return discretize(paper_sd, 400, 50.0, temperature=300.0, label="bath")


@pytest.fixture(scope="session")
def small_bath(paper_sd):
    """Paper spectral density with fewer modes, for cheap dynamics tests."""
    return discretize(paper_sd, 100, 50.0, temperature=300.0, label="bath")


@pytest.fixture(scope="session")
def two_level_system():
    return SystemSpec(epsilon_cm1=(0.0, 100.0),
                      couplings=[("bath", [[0.0, 1.0], [1.0, 0.0]])])


def sample_phases(bath, n, seed):
    """Wigner-sampled (q, p) blocks for direct kernel calls."""
    rng = np.random.default_rng(seed)
    sq, sp = bath.wigner_sigmas()
    return (rng.standard_normal((n, bath.n_modes)) * sq,
            rng.standard_normal((n, bath.n_modes)) * sp)
