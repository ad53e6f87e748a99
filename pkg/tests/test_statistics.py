import numpy as np
import pytest

from spinflow import fields, stats
from spinflow.fields import SphereField
from spinflow.integrator import random_unit_field
from spinflow.noise import (NoiseSpectrum, basis_eval, dbasis_eval,
                            injection_rate, trajectory_rng)
from spinflow.stats import (DiffusionMatrix2, EmpiricalLaw, EstimatorError,
                            balance_residual, det_lower_bound,
                            diffusion_matrix, gaussian_tail_fit,
                            integrated_autocorrelation, occupation_density,
                            occupation_density_of_samples, small_ball_diverges,
                            small_ball_ratio, small_set_exponent,
                            tail_survival)


class TestTails:
    def test_single_sample_steps(self):
        law = EmpiricalLaw(np.array([5.0]))
        assert np.array_equal(tail_survival(law, [4.0, 6.0]), [1.0, 0.0])

    def test_non_increasing(self):
        rng = trajectory_rng(0)
        law = EmpiricalLaw(rng.standard_normal(5000))
        surv = tail_survival(law, np.linspace(-2, 2, 20))
        assert np.all(np.diff(surv) <= 0.0)

    def test_rejects_unordered_thresholds(self):
        with pytest.raises(EstimatorError):
            tail_survival(EmpiricalLaw(np.array([1.0])), [2.0, 1.0])

    def test_gaussian_tail_oracle(self):
        # standard normal: -log P(X > R) ~ R^2 / 2
        rng = trajectory_rng(1)
        law = EmpiricalLaw(rng.standard_normal(10 ** 6))
        slope, r_sq = gaussian_tail_fit(law, lo_quantile=0.8413,
                                        hi_quantile=0.9987)
        # the Mills-ratio log R correction biases the finite-range slope
        # upward of the asymptotic 1/2
        assert 0.45 < slope < 0.65
        assert r_sq > 0.99

    def test_weighted_samples(self):
        law = EmpiricalLaw(np.array([1.0, 3.0]), weights=np.array([3.0, 1.0]))
        assert tail_survival(law, [2.0])[0] == pytest.approx(0.25)


class TestSmallBalls:
    def test_uniform_oracle(self):
        rng = trajectory_rng(2)
        law = EmpiricalLaw(rng.uniform(size=10 ** 6))
        eps = np.logspace(-3.0, -1.0, 9)
        ratios = small_ball_ratio(law, eps)
        assert np.all(np.abs(ratios - 1.0) < 0.15)
        assert not small_ball_diverges(law, eps)

    def test_bounded_away_from_zero(self):
        law = EmpiricalLaw(np.linspace(1.0, 2.0, 1000))
        assert np.all(small_ball_ratio(law, np.logspace(-2, -0.5, 5)) == 0.0)

    def test_square_of_uniform_detector(self):
        # X = U^2 has P(X < eps)/eps = eps^{-1/2}: must be flagged
        rng = trajectory_rng(3)
        law = EmpiricalLaw(rng.uniform(size=10 ** 6) ** 2)
        eps = np.logspace(-4.0, -1.0, 13)
        assert small_ball_diverges(law, eps)

    def test_detector_needs_two_decades(self):
        law = EmpiricalLaw(np.array([1.0]))
        with pytest.raises(EstimatorError):
            small_ball_diverges(law, np.logspace(-1.5, -1.0, 4))


class TestOccupation:
    def test_total_mass_one(self):
        rng = trajectory_rng(4)
        hist = occupation_density_of_samples(rng.standard_normal(5000), 0.05)
        assert hist.total_mass() == pytest.approx(1.0, abs=1e-12)

    def test_constant_samples_single_bin(self):
        hist = occupation_density_of_samples(np.full(100, 2.5), 0.1)
        assert np.count_nonzero(hist.density) == 1

    def test_ou_stationary_oracle(self):
        # exact AR(1) sampling of an OU process; the occupation density must
        # match the known Gaussian stationary law in sup norm
        rng = trajectory_rng(5)
        n, phi = 10 ** 6, 0.95
        innovations = rng.standard_normal(n) * np.sqrt(1.0 - phi * phi)
        path = np.empty(n)
        path[0] = rng.standard_normal()
        for k in range(1, n):
            path[k] = phi * path[k - 1] + innovations[k]
        hist = occupation_density_of_samples(path, 1.0 / 20.0)
        centers = 0.5 * (hist.edges[:-1] + hist.edges[1:])
        gauss = np.exp(-0.5 * centers ** 2) / np.sqrt(2.0 * np.pi)
        core = np.abs(centers) < 2.5
        assert np.max(np.abs(hist.density[core] - gauss[core])) < 0.03 * np.max(gauss)

    def test_series_accessor(self):
        from spinflow.integrator import ObservableSeries
        series = ObservableSeries(
            t=np.arange(4.0), avg_sq=np.zeros(4), energy=np.array([1.0, 1.1, 0.9, 1.0]),
            centered_l2_sq=np.zeros(4), dissipation=np.zeros(4), h2=np.zeros(4))
        hist = occupation_density(series, "energy", 0.5)
        assert hist.total_mass() == pytest.approx(1.0)
        with pytest.raises(KeyError):
            occupation_density(series, "nope", 0.5)

    def test_small_set_exponent_gaussian(self):
        rng = trajectory_rng(6)
        gamma = small_set_exponent(rng.standard_normal(200000))
        assert gamma == pytest.approx(1.0, abs=0.12)


class TestDiffusionMatrix:
    SPEC = NoiseSpectrum.from_pairs([(1, 1.0), (2, 0.6), (3, 0.3)])

    def test_brute_force_oracle(self):
        # naive per-mode, per-coordinate double loop over the theta vectors
        u = random_unit_field(64, trajectory_rng(7, 0))
        nu = 0.3
        dx = u.grid_spacing
        x = u.x
        avg = u.values.mean(axis=0)
        du = fields.central_diff(u.values, dx)
        torsion = np.cross(u.values, du)
        lam = dict(zip(self.SPEC.modes.tolist(), self.SPEC.lambdas.tolist()))
        sigma = np.zeros((2, 2))
        for j in self.SPEC.modes:
            if j == 0:
                continue
            ej = basis_eval(int(j), x)
            dej = dbasis_eval(int(j), x)
            t1 = np.sqrt(nu) * lam[int(j)] * np.cross(
                (ej[:, None] * u.values).mean(axis=0), avg)
            t2 = np.sqrt(nu) * lam[int(j)] * np.sum(
                dej[:, None] * torsion, axis=0) * dx
            for k, a in enumerate((t1, t2)):
                for l, b in enumerate((t1, t2)):
                    for i in range(3):
                        sigma[k, l] += a[i] * b[i]
        m = diffusion_matrix(u, self.SPEC, nu)
        assert np.max(np.abs(m.entries - sigma)) < 1e-12 * max(1.0, np.max(np.abs(sigma)))

    def test_constant_field_degenerate(self):
        u = SphereField(np.tile([0.0, 0.6, 0.8], (32, 1)))
        m = diffusion_matrix(u, self.SPEC, 0.5)
        # zero up to rounding in the quadrature sums
        assert np.max(np.abs(m.entries)) < 1e-30
        assert det_lower_bound(u, self.SPEC, 0.5) < 1e-60

    def test_zero_average_field_first_row_vanishes(self):
        u = SphereField(np.stack([np.cos(fields.grid(32)),
                                  np.sin(fields.grid(32)),
                                  np.zeros(32)], axis=1))
        m = diffusion_matrix(u, self.SPEC, 0.5)
        assert abs(m.entries[0, 0]) < 1e-28 and abs(m.entries[0, 1]) < 1e-28

    def test_psd_and_bound_on_random_fields(self):
        for k in range(200):
            u = random_unit_field(32, trajectory_rng(100, k))
            m = diffusion_matrix(u, self.SPEC, 0.4)
            assert m.is_psd()
            det = m.det()
            assert det - det_lower_bound(u, self.SPEC, 0.4) >= -1e-10 * max(det, 1e-300)

    def test_quartic_scaling(self):
        u = random_unit_field(32, trajectory_rng(9, 0))
        scaled = NoiseSpectrum(self.SPEC.modes, 2.0 * self.SPEC.lambdas)
        m1 = diffusion_matrix(u, self.SPEC, 0.4)
        m2 = diffusion_matrix(u, scaled, 0.4)
        assert np.allclose(m2.entries, 4.0 * m1.entries, rtol=1e-13)
        assert det_lower_bound(u, scaled, 0.4) == pytest.approx(
            16.0 * det_lower_bound(u, self.SPEC, 0.4), rel=1e-12)

    def test_symmetry_enforced(self):
        with pytest.raises(EstimatorError):
            DiffusionMatrix2(np.array([[1.0, 0.2], [0.3, 1.0]]), nu=0.5)


class TestBalance:
    def _series(self, dissipation):
        from spinflow.integrator import ObservableSeries
        n = len(dissipation)
        z = np.zeros(n)
        return ObservableSeries(t=np.linspace(0.0, 100.0, n), avg_sq=z,
                                energy=z, centered_l2_sq=z,
                                dissipation=np.asarray(dissipation), h2=z)

    def test_exact_balance_gives_zero(self):
        spec = NoiseSpectrum.from_pairs([(1, 1.0)])
        rate = injection_rate(spec)
        res = balance_residual(self._series(np.full(50, rate)), spec, nu=0.5)
        assert float(res) == pytest.approx(0.0, abs=1e-14)
        assert not res.short_segment

    def test_zero_noise_gives_minus_one(self):
        spec = NoiseSpectrum(np.array([-1, 0, 1]), np.zeros(3))
        res = balance_residual(self._series(np.linspace(1, 0, 50)), spec, nu=0.5)
        assert float(res) == -1.0

    def test_short_segment_flagged(self):
        spec = NoiseSpectrum.from_pairs([(1, 1.0)])
        series = self._series(np.full(50, 2.0))
        series.t[:] = np.linspace(0.0, 0.5, 50)
        assert balance_residual(series, spec, nu=0.1).short_segment


class TestAutocorrelation:
    def test_white_noise_near_one(self):
        rng = trajectory_rng(10)
        tau = integrated_autocorrelation(rng.standard_normal(20000))
        assert tau == pytest.approx(1.0, abs=0.2)

    def test_ar1_matches_closed_form(self):
        # AR(1): tau = (1 + phi) / (1 - phi)
        rng = trajectory_rng(11)
        phi, n = 0.8, 400000
        x = np.empty(n)
        x[0] = 0.0
        eps = rng.standard_normal(n)
        for k in range(1, n):
            x[k] = phi * x[k - 1] + eps[k]
        tau = integrated_autocorrelation(x)
        assert tau == pytest.approx((1 + phi) / (1 - phi), rel=0.15)

    def test_cap_applied(self):
        x = np.sin(np.linspace(0.0, 3.0, 5000))   # near-unit correlation
        assert integrated_autocorrelation(x, cap=40) <= 40.0
