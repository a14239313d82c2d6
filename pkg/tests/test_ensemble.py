import math
from dataclasses import replace

import numpy as np
import pytest

from ehrenfestdb.bath import SpectralDensity, SpectralDensityFamily, discretize
from ehrenfestdb.ehrenfest import StepConfig
from ehrenfestdb.ensemble import EnsembleConfig, EnsembleError, \
    convergence_report, population_difference, run_ensemble, scenario_build, \
    steady_difference, _sample_chunk
from ehrenfestdb.system import CorrectionKind, SystemSpec
from ehrenfestdb.units import CM1_TO_ANGFREQ


def small_cfg(**kw):
    defaults = dict(n_traj=32, base_seed=7, t_final=1.0, n_record=11,
                    step=StepConfig(dt=1e-3, norm_drift_budget=math.inf))
    defaults.update(kw)
    return EnsembleConfig(**defaults)


@pytest.fixture(scope="module")
def mini_bath(paper_sd):
    return discretize(paper_sd, 60, 50.0, temperature=300.0, label="bath")


class TestScenarioBuild:
    def test_two_level_paper(self):
        system, baths, cfg = scenario_build("two_level_paper")
        assert system.epsilon_cm1 == (0.0, 100.0)
        assert np.array_equal(system.coupling_matrix("bath"),
                              [[0.0, 1.0], [1.0, 0.0]])
        assert len(baths) == 1
        assert baths[0].temperature == 300.0
        assert baths[0].n_modes == 400
        assert cfg.n_traj == 8000
        assert cfg.t_final == 20.0
        assert cfg.step.dt == 1e-3

    def test_three_level_cases(self):
        for name, (v13, v23) in [("three_level_case1", (1.0, 1.0)),
                                 ("three_level_case2", (3.0, 1.0)),
                                 ("three_level_case3", (1.0, 3.0))]:
            system, baths, _ = scenario_build(name)
            v = system.coupling_matrix("bath")
            assert v[0, 2] == v13 and v[2, 0] == v13
            assert v[1, 2] == v23 and v[2, 1] == v23
            assert v[0, 1] == 0.0
            assert system.epsilon_cm1 == (0.0, 100.0, 120.0)

    def test_two_temperature(self):
        system, baths, _ = scenario_build("two_temperature")
        temps = {b.label: b.temperature for b in baths}
        assert temps == {"hot": 6000.0, "cold": 300.0}
        assert np.array_equal(
            system.coupling_matrix("hot"),
            [[0, 0, 1.0], [0, 0, 0], [1.0, 0, 0]])
        assert np.array_equal(
            system.coupling_matrix("cold"),
            [[0, 0, 0], [0, 0, 1.0], [0, 1.0, 0]])

    def test_unknown_rejected(self):
        with pytest.raises(ValueError, match="scenario"):
            scenario_build("four_level")


class TestSeeding:
    def test_per_reservoir_streams_differ(self, mini_bath):
        # identical bath twice: only the reservoir index separates the
        # counter-based streams
        q, p = _sample_chunk(11, 0, 0, 4, "wigner", [mini_bath, mini_bath],
                             np.array([0, 60, 120]))
        assert not np.allclose(q[:, :60], q[:, 60:])
        assert not np.allclose(p[:, :60], p[:, 60:])

    def test_order_independent(self, mini_bath):
        q_all, p_all = _sample_chunk(11, 0, 0, 8, "wigner", [mini_bath],
                                     np.array([0, 60]))
        q_tail, p_tail = _sample_chunk(11, 0, 5, 8, "wigner", [mini_bath],
                                       np.array([0, 60]))
        assert np.array_equal(q_all[5:], q_tail)
        assert np.array_equal(p_all[5:], p_tail)

    def test_offset_shifts_stream(self, mini_bath):
        q0, _ = _sample_chunk(11, 0, 0, 2, "wigner", [mini_bath],
                              np.array([0, 60]))
        q5, _ = _sample_chunk(11, 5, 0, 2, "wigner", [mini_bath],
                              np.array([0, 60]))
        assert not np.allclose(q0, q5)


class TestRunEnsemble:
    def test_zero_coupling_trivial(self, mini_bath):
        system = SystemSpec(epsilon_cm1=(0.0, 100.0),
                            couplings=[("bath", np.zeros((2, 2)))])
        cfg = small_cfg(step=StepConfig(
            dt=1e-3, correction_kind=CorrectionKind.NONE))
        res = run_ensemble(system, [mini_bath], cfg)
        assert np.allclose(res.rho[:, 0, 0].real, 1.0, atol=1e-12)
        assert np.allclose(res.stderr[:, 0, 0], 0.0, atol=1e-12)
        assert res.n_valid == cfg.n_traj
        v, e = steady_difference(res, 0, 1)
        assert v == pytest.approx(1.0, abs=1e-12)
        assert e == pytest.approx(0.0, abs=1e-12)

    def test_single_trajectory_flagged(self, mini_bath, two_level_system):
        cfg = small_cfg(n_traj=1)
        res = run_ensemble(two_level_system, [mini_bath], cfg)
        assert not res.stderr_defined
        assert np.isnan(res.stderr).all()
        assert res.n_valid == 1
        # equals the single trajectory's outer product
        pops = res.populations()
        assert np.allclose(pops.sum(axis=1), 1.0, atol=1e-12)

    def test_trace_and_hermiticity_exact(self, mini_bath, two_level_system):
        res = run_ensemble(two_level_system, [mini_bath], small_cfg())
        trace = np.einsum("sii->s", res.rho).real
        assert np.max(np.abs(trace - 1.0)) < 1e-12
        assert np.array_equal(res.rho, np.conj(np.swapaxes(res.rho, 1, 2)))

    def test_initial_state_column(self, mini_bath, two_level_system):
        res = run_ensemble(two_level_system, [mini_bath], small_cfg())
        assert res.rho[0, 0, 0].real == pytest.approx(1.0, abs=1e-14)
        assert abs(res.rho[0, 1, 1]) < 1e-14

    def test_custom_initial_state(self, mini_bath, two_level_system):
        amp = 1.0 / math.sqrt(2.0)
        cfg = small_cfg(initial_state=(amp, amp))
        res = run_ensemble(two_level_system, [mini_bath], cfg)
        assert res.rho[0, 0, 1].real == pytest.approx(0.5, abs=1e-12)
        with pytest.raises(ValueError, match="normalized"):
            run_ensemble(two_level_system, [mini_bath],
                         small_cfg(initial_state=(1.0, 1.0)))

    def test_stderr_scaling(self, mini_bath, two_level_system):
        cfg_small = small_cfg(n_traj=100, base_seed=3, t_final=0.5,
                              n_record=6)
        cfg_large = small_cfg(n_traj=400, base_seed=3, t_final=0.5,
                              n_record=6)
        res_s = run_ensemble(two_level_system, [mini_bath], cfg_small)
        res_l = run_ensemble(two_level_system, [mini_bath], cfg_large)
        # pooled over times and entries: ratio must be ~ sqrt(4) = 2
        num = res_s.stderr[1:, 0, 0].mean()
        den = res_l.stderr[1:, 0, 0].mean()
        assert 1.8 < num / den < 2.2

    def test_too_many_invalid_raises(self, mini_bath, two_level_system):
        cfg = small_cfg(step=StepConfig(dt=1e-3, norm_drift_budget=1e-4))
        with pytest.raises(EnsembleError, match="invalid"):
            run_ensemble(two_level_system, [mini_bath], cfg)

    @pytest.mark.parametrize("workers", [1, 4, 16])
    def test_bit_determinism_across_workers(self, mini_bath,
                                            two_level_system, workers):
        cfg = small_cfg(n_traj=32, t_final=0.5, n_record=6)
        res = run_ensemble(two_level_system, [mini_bath], cfg,
                           workers=workers)
        key = (res.rho.tobytes(), res.stderr.tobytes(),
               res.steady.populations.tobytes())
        if not hasattr(self, "_reference"):
            type(self)._reference = key
        assert key == self._reference


@pytest.fixture(scope="module")
def result(mini_bath, two_level_system):
    return run_ensemble(two_level_system, [mini_bath],
                        small_cfg(n_traj=64, t_final=1.0, n_record=11))


class TestPopulationDifference:
    def test_initial_value_one(self, result):
        for normalized in (False, True):
            d = population_difference(result, 0, 1, normalized)
            assert d.value[0] == pytest.approx(1.0, abs=1e-12)

    def test_matches_recomputation(self, result):
        d = population_difference(result, 0, 1)
        pops = result.populations()
        assert np.allclose(d.value, pops[:, 0] - pops[:, 1], atol=1e-14)
        var = (result.pop_cov[:, 0, 0] + result.pop_cov[:, 1, 1]
               - 2 * result.pop_cov[:, 0, 1])
        assert np.allclose(d.stderr, np.sqrt(np.maximum(var, 0)), atol=1e-14)

    def test_symmetric_state_zero(self, mini_bath, two_level_system):
        amp = 1.0 / math.sqrt(2.0)
        res = run_ensemble(two_level_system, [mini_bath],
                           small_cfg(initial_state=(amp, amp), n_record=3,
                                     t_final=0.2))
        d = population_difference(res, 0, 1)
        assert d.value[0] == pytest.approx(0.0, abs=1e-12)

    def test_normalized_unreliable_flagged(self, mini_bath):
        # all population in level 3: rho_1 + rho_2 sits at the noise floor
        system = SystemSpec(
            epsilon_cm1=(0.0, 100.0, 120.0),
            couplings=[("bath", np.zeros((3, 3)))])
        cfg = small_cfg(initial_state=(0.0, 0.0, 1.0), n_record=3,
                        t_final=0.2,
                        step=StepConfig(dt=1e-3,
                                        correction_kind=CorrectionKind.NONE))
        res = run_ensemble(system, [mini_bath], cfg)
        d = population_difference(res, 0, 1, normalized=True)
        assert not d.reliable.any()

    def test_invalid_pair_rejected(self, result):
        with pytest.raises(ValueError):
            population_difference(result, 0, 0)
        with pytest.raises(ValueError):
            population_difference(result, 0, 5)


class TestConvergenceReport:
    def test_same_stream_rejected(self, mini_bath, two_level_system):
        res = run_ensemble(two_level_system, [mini_bath], small_cfg())
        with pytest.raises(ValueError, match="same trajectory stream"):
            convergence_report(res, res)

    def test_overlapping_ranges_rejected(self, mini_bath, two_level_system):
        res_a = run_ensemble(two_level_system, [mini_bath],
                             small_cfg(n_traj=16))
        res_b = run_ensemble(two_level_system, [mini_bath],
                             small_cfg(n_traj=32))
        with pytest.raises(ValueError, match="overlap"):
            convergence_report(res_a, res_b)

    def test_disjoint_halves_consistent(self, mini_bath, two_level_system):
        res_a = run_ensemble(two_level_system, [mini_bath],
                             small_cfg(n_traj=150, t_final=0.5, n_record=6))
        res_b = run_ensemble(two_level_system, [mini_bath],
                             small_cfg(n_traj=150, traj_offset=150,
                                       t_final=0.5, n_record=6))
        report = convergence_report(res_a, res_b)
        assert report.converged, f"max sigma {report.max_sigma}"

    def test_zero_coupling_degenerate(self, mini_bath):
        system = SystemSpec(epsilon_cm1=(0.0, 100.0),
                            couplings=[("bath", np.zeros((2, 2)))])
        step = StepConfig(dt=1e-3, correction_kind=CorrectionKind.NONE)
        res_a = run_ensemble(system, [mini_bath],
                             small_cfg(n_traj=8, step=step))
        res_b = run_ensemble(system, [mini_bath],
                             small_cfg(n_traj=8, traj_offset=100, step=step))
        report = convergence_report(res_a, res_b)
        assert report.max_sigma == 0.0
        assert report.converged
