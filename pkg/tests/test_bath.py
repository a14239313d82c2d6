import math

import numpy as np
import pytest
from scipy import integrate

from ehrenfestdb.bath import BathPhase, DiscretizedBath, NoiseCovarianceError, \
    SpectralDensity, SpectralDensityFamily, classical_sample, discretize, \
    force_autocorrelation_check, gaussian_noise_series, memory_kernel, \
    wigner_sample
from ehrenfestdb.units import DEFAULT_UNITS


def quad_reorganization(sd):
    """Independent quadrature oracle for (1/pi) int_0^inf J(w)/w dw."""
    val, _ = integrate.quad(sd.j_over_omega, 0.0, np.inf, limit=400)
    return val / math.pi


class TestDiscretize:
    def test_endpoint_is_omega_max(self, paper_sd):
        bath = discretize(paper_sd, 400, 50.0, temperature=300.0)
        assert bath.omegas[-1] == pytest.approx(50.0, rel=1e-12)

    def test_single_mode(self, paper_sd):
        bath = discretize(paper_sd, 1, 50.0, temperature=300.0,
                          check_sum_rule=False)
        assert bath.omegas[0] == pytest.approx(50.0, rel=1e-12)
        coverage = 1.0 - math.exp(-5.0)
        g_expected = 50.0 * math.sqrt(
            (2 * paper_sd.eta / math.pi) * paper_sd.omega_c * coverage)
        assert bath.gs[0] == pytest.approx(g_expected, rel=1e-12)

    @pytest.mark.parametrize("n_modes", [50, 400, 2000])
    def test_sum_rule_ohmic(self, paper_sd, n_modes):
        bath = discretize(paper_sd, n_modes, 50.0, temperature=300.0)
        mu = quad_reorganization(paper_sd)
        assert mu == pytest.approx(100.0 / math.pi, rel=1e-9)
        rel = abs(bath.reorganization_from_modes() - mu) / mu
        assert rel < 0.01
        # the mode sum equals the truncated integral essentially exactly
        mu_trunc, _ = integrate.quad(paper_sd.j_over_omega, 0.0, 50.0)
        assert bath.reorganization_from_modes() == pytest.approx(
            mu_trunc / math.pi, rel=1e-9)

    def test_sum_rule_drude(self):
        sd = SpectralDensity(SpectralDensityFamily.DRUDE_LORENTZ, eta=2.0,
                             omega_c=5.0)
        bath = discretize(sd, 400, 100.0 * sd.omega_c, temperature=300.0)
        mu = quad_reorganization(sd)
        assert mu == pytest.approx(sd.eta, rel=1e-6)
        assert abs(bath.reorganization_from_modes() - mu) / mu < 0.01

    def test_frequencies_strictly_increasing(self, paper_bath):
        assert np.all(np.diff(paper_bath.omegas) > 0)
        assert np.all(paper_bath.omegas > 0)

    def test_sum_rule_violation_raises(self, paper_sd):
        with pytest.raises(ValueError, match="sum rule"):
            discretize(paper_sd, 400, 0.5 * paper_sd.omega_c,
                       temperature=300.0)

    def test_bad_inputs(self, paper_sd):
        with pytest.raises(ValueError):
            discretize(paper_sd, 0, 50.0, temperature=300.0)
        with pytest.raises(ValueError):
            discretize(paper_sd, 10, -1.0, temperature=300.0)


class TestSamplers:
    def test_wigner_variance_zero_point_limit(self):
        # beta hbar w >> 1: Var(q) -> 1/(2w)
        bath = DiscretizedBath(omegas=np.array([10.0]), gs=np.array([1.0]),
                               temperature=0.05)
        sq, sp = bath.wigner_sigmas()
        assert sq[0] ** 2 == pytest.approx(1.0 / 20.0, rel=1e-9)
        assert sp[0] ** 2 == pytest.approx(5.0, rel=1e-9)

    def test_wigner_variance_classical_limit(self):
        # beta hbar w << 1: Var(q) -> kT/w^2, Var(p) -> kT
        bath = DiscretizedBath(omegas=np.array([0.01]), gs=np.array([1.0]),
                               temperature=3000.0)
        kt = bath.kt
        sq, sp = bath.wigner_sigmas()
        assert sq[0] ** 2 == pytest.approx(kt / 1e-4, rel=1e-4)
        assert sp[0] ** 2 == pytest.approx(kt, rel=1e-4)

    @pytest.mark.parametrize("sampler,varfun", [
        (wigner_sample, "wigner_sigmas"),
        (classical_sample, "classical_sigmas"),
    ])
    def test_sample_moments_single_mode(self, sampler, varfun):
        # 1e5 samples at w = 10 rad/ps, T = 300 K: moments within 3 sigma
        bath = DiscretizedBath(omegas=np.array([10.0]), gs=np.array([1.0]),
                               temperature=300.0)
        rng = np.random.default_rng(123)
        n = 100_000
        qs = np.empty(n)
        ps = np.empty(n)
        for k in range(n):
            ph = sampler(bath, rng)
            qs[k] = ph.q[0]
            ps[k] = ph.p[0]
        var_q, var_p = getattr(bath, varfun)()
        var_q, var_p = var_q[0] ** 2, var_p[0] ** 2
        se_mean_q = math.sqrt(var_q / n)
        se_var_q = var_q * math.sqrt(2.0 / (n - 1))
        assert abs(qs.mean()) < 3 * se_mean_q
        assert abs(ps.mean()) < 3 * math.sqrt(var_p / n)
        assert abs(qs.var(ddof=1) - var_q) < 3 * se_var_q
        assert abs(ps.var(ddof=1) - var_p) < 3 * var_p * math.sqrt(2 / (n - 1))
        # q and p are independent
        corr = (qs * ps).mean() / math.sqrt(var_q * var_p)
        assert abs(corr) < 3 / math.sqrt(n)

    def test_temperature_zero_rejected(self):
        bath = DiscretizedBath(omegas=np.array([1.0]), gs=np.array([1.0]),
                               temperature=0.0)
        rng = np.random.default_rng(0)
        with pytest.raises(ValueError):
            wigner_sample(bath, rng)
        with pytest.raises(ValueError):
            classical_sample(bath, rng)


class TestMemoryKernel:
    def test_zero_time_is_twice_reorganization(self, paper_bath):
        assert memory_kernel(paper_bath, 0.0) == pytest.approx(
            2.0 * paper_bath.reorganization_from_modes(), rel=1e-12)

    def test_single_mode_closed_form(self):
        bath = DiscretizedBath(omegas=np.array([3.0]), gs=np.array([2.0]),
                               temperature=300.0)
        for t in (0.0, 0.3, 1.7):
            assert memory_kernel(bath, t) == pytest.approx(
                (4.0 / 9.0) * math.cos(3.0 * t), rel=1e-12)

    def test_even_and_bounded(self, paper_bath):
        ts = np.linspace(0.0, 2.0, 40)
        k_pos = memory_kernel(paper_bath, ts)
        k_neg = memory_kernel(paper_bath, -ts)
        assert np.allclose(k_pos, k_neg, rtol=0, atol=1e-12)
        assert np.all(np.abs(k_pos) <= memory_kernel(paper_bath, 0.0) + 1e-12)

    def test_continuum_limit(self, paper_sd, paper_bath):
        # quadrature oracle for (2/pi) int J(w) cos(wt)/w dw
        ts = np.linspace(0.0, 2 * math.pi / paper_sd.omega_c, 15)
        k_disc = memory_kernel(paper_bath, ts)
        k0 = memory_kernel(paper_bath, 0.0)
        for t, kd in zip(ts, k_disc):
            kq, _ = integrate.quad(
                lambda w: paper_sd.j_over_omega(w) * math.cos(w * t),
                0.0, np.inf, limit=400)
            kq *= 2.0 / math.pi
            assert abs(kd - kq) / k0 < 0.01


class TestForceAutocorrelation:
    def test_zero_time_variance(self, paper_sd):
        bath = discretize(paper_sd, 50, 50.0, temperature=300.0)
        rng = np.random.default_rng(7)
        report = force_autocorrelation_check(bath, 20_000, [0.0], rng)
        # closed-form oracle: <F^2> = sum g_i^2 kT/w_i^2 = kT K(0)
        target = bath.kt * memory_kernel(bath, 0.0)
        assert report.target[0] == pytest.approx(target, rel=1e-12)
        assert abs(report.estimate[0] - target) < 3 * report.stderr[0]

    def test_grid_within_three_sigma(self, paper_sd):
        bath = discretize(paper_sd, 50, 50.0, temperature=300.0)
        rng = np.random.default_rng(11)
        ts = np.linspace(0.0, 0.6, 10)
        report = force_autocorrelation_check(bath, 20_000, ts, rng)
        assert report.max_sigma < 3.0

    def test_single_mode_exact_expectation(self):
        bath = DiscretizedBath(omegas=np.array([4.0]), gs=np.array([1.5]),
                               temperature=300.0)
        rng = np.random.default_rng(3)
        ts = np.array([0.0, 0.4, 1.1])
        report = force_autocorrelation_check(bath, 40_000, ts, rng)
        var_q = bath.kt / 16.0
        expected = 1.5 ** 2 * var_q * np.cos(4.0 * ts)
        assert np.allclose(report.target, expected, rtol=1e-12)
        assert report.max_sigma < 3.0

    def test_wigner_sampling_in_classical_limit(self):
        # all modes with beta hbar w << 1: Wigner == classical statistics
        sd = SpectralDensity(SpectralDensityFamily.OHMIC_EXP, eta=1.0,
                             omega_c=0.1)
        bath = discretize(sd, 40, 0.5, temperature=300.0)
        rng = np.random.default_rng(19)
        ts = np.linspace(0.0, 5.0, 8)
        report = force_autocorrelation_check(bath, 20_000, ts, rng,
                                             sampler=wigner_sample)
        assert report.max_sigma < 3.0


class TestGaussianNoise:
    def test_white_noise_lag_one(self):
        rng = np.random.default_rng(5)
        cov = np.array([1.0, 0.0, 0.0, 0.0])
        x = gaussian_noise_series(cov, 50_000, rng)
        lag1 = np.mean(x[:, 0] * x[:, 1])
        assert abs(lag1) < 3.0 / math.sqrt(50_000)
        assert x[:, 0].var(ddof=1) == pytest.approx(
            1.0, abs=3 * math.sqrt(2.0 / 49_999))

    def test_non_psd_rejected_with_eigenvalue(self):
        cov = np.array([1.0, 0.99, 0.0])
        with pytest.raises(NoiseCovarianceError, match="eigenvalue"):
            gaussian_noise_series(cov, 10, np.random.default_rng(0))

    def test_kernel_covariance_reproduced(self):
        # five-mode bath kernel as the target covariance
        bath = DiscretizedBath(
            omegas=np.array([1.0, 2.0, 3.5, 5.0, 8.0]),
            gs=np.array([0.5, 0.7, 0.2, 0.9, 0.4]), temperature=300.0)
        ts = np.arange(6) * 0.05
        cov = bath.kt * memory_kernel(bath, ts)
        rng = np.random.default_rng(17)
        n = 40_000
        x = gaussian_noise_series(cov, n, rng)
        for lag in range(6):
            prods = x[:, 0] * x[:, lag]
            se = prods.std(ddof=1) / math.sqrt(n)
            assert abs(prods.mean() - cov[lag]) < 3 * se

    def test_wick_four_point(self, paper_bath):
        from ehrenfestdb.diagnostics import check_wick
        rng = np.random.default_rng(29)
        check = check_wick(paper_bath, 200_000, rng)
        assert check.passed, check.detail
