import math

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.stats import multivariate_normal

from ctmc import (
    BoltzmannMachine,
    CustomPotential,
    DimensionError,
    GaussianDensity,
    GaussianMixtureModel,
    RelaxationModel,
    SizeLimitError,
    UsageError,
    bm_exhaustive_oracle,
    generate_bm_params,
    model_from_dict,
    relaxation_from_bm,
    relaxation_gradient,
    relaxation_potential,
    relaxation_true_moments,
)
from helpers import (
    bm_exact_sampler,
    gradient_rel_error,
    naive_bm_enumerator,
)

LOG_2PI = math.log(2 * math.pi)


class TestRelaxationPotential:
    def test_zero_coupling_quadratic(self):
        model = RelaxationModel([[0.0]], [0.0], [1e-6], BoltzmannMachine([[0.0]], [0.0]))
        assert relaxation_potential(model, [2.0]) == pytest.approx(2.0, abs=1e-12)

    def test_logcosh_symmetry_at_zero(self):
        model = RelaxationModel([[1.0]], [0.0], [1.0], BoltzmannMachine([[0.0]], [0.0]))
        assert relaxation_potential(model, [0.0]) == pytest.approx(0.0, abs=1e-15)

    def test_large_argument_no_overflow(self):
        # 0.5 * 50^2 - logcosh(50), via 50-digit arithmetic
        model = RelaxationModel([[1.0]], [0.0], [1.0], BoltzmannMachine([[0.0]], [0.0]))
        val = relaxation_potential(model, [50.0])
        assert val == pytest.approx(1200.6931471805599453, rel=1e-14)
        assert np.isfinite(relaxation_potential(model, [500.0]))

    def test_dimension_mismatch(self):
        model = RelaxationModel([[1.0]], [0.0], [1.0], BoltzmannMachine([[0.0]], [0.0]))
        with pytest.raises(DimensionError):
            relaxation_potential(model, [1.0, 2.0])

    def test_batch_matches_scalar(self, rng):
        bm = generate_bm_params(5, 6)
        model = relaxation_from_bm(bm)
        X = rng.standard_normal((10, model.dim))
        batch = model.potential_batch(X)
        single = [model.potential(x) for x in X]
        assert np.allclose(batch, single, rtol=1e-13)


class TestRelaxationGradient:
    def test_zero_coupling(self):
        model = RelaxationModel([[0.0]], [0.0], [1e-6], BoltzmannMachine([[0.0]], [0.0]))
        assert relaxation_gradient(model, [3.0]) == pytest.approx([3.0])

    def test_tanh_zero(self):
        model = RelaxationModel([[1.0]], [0.0], [1.0], BoltzmannMachine([[0.0]], [0.0]))
        assert relaxation_gradient(model, [0.0]) == pytest.approx([0.0])

    def test_matches_finite_differences(self, rng):
        bm = generate_bm_params(2, 7)
        model = relaxation_from_bm(bm)
        for _ in range(25):
            x = rng.standard_normal(model.dim) * 2.0
            err = gradient_rel_error(model.potential, model.gradient, x)
            assert err < 1e-5


class TestBmOracle:
    def test_single_unit(self):
        oracle = bm_exhaustive_oracle(BoltzmannMachine([[0.0]], [0.0]))
        assert oracle.log_z_b == pytest.approx(math.log(2.0), abs=1e-14)
        assert oracle.mean_s == pytest.approx([0.0], abs=1e-15)

    def test_two_unit_closed_form(self):
        w = 0.7
        bm = BoltzmannMachine([[0.0, w], [w, 0.0]], [0.0, 0.0])
        oracle = bm_exhaustive_oracle(bm)
        # log(2 e^w + 2 e^-w) and tanh(w), 50-digit values
        assert oracle.log_z_b == pytest.approx(1.613564590478396236, rel=1e-14)
        assert oracle.second_moment_s[0, 1] == pytest.approx(
            0.60436777711716349631, rel=1e-13
        )

    @pytest.mark.parametrize("seed", [0, 3, 11])
    def test_matches_naive_enumerator(self, seed):
        bm = generate_bm_params(seed, 8)
        oracle = bm_exhaustive_oracle(bm)
        log_z, mean, second = naive_bm_enumerator(bm.W, bm.b)
        assert abs(oracle.log_z_b - log_z) < 1e-10
        assert np.max(np.abs(oracle.mean_s - mean)) < 1e-10
        assert np.max(np.abs(oracle.second_moment_s - second)) < 1e-10

    def test_size_guard(self):
        n = 21
        bm = BoltzmannMachine(np.zeros((n, n)), np.zeros(n))
        with pytest.raises(SizeLimitError):
            bm_exhaustive_oracle(bm)

    def test_unit_diagonal(self):
        oracle = bm_exhaustive_oracle(generate_bm_params(1, 6))
        assert np.allclose(np.diag(oracle.second_moment_s), 1.0)
        assert np.allclose(oracle.second_moment_s, oracle.second_moment_s.T)


class TestRelaxationFromBm:
    def test_zero_coupling(self):
        bm = BoltzmannMachine(np.zeros((2, 2)), np.zeros(2))
        model = relaxation_from_bm(bm, eps=1e-6)
        assert np.allclose(model.diag_shift, 1e-6)
        assert np.allclose(model.Q @ model.Q.T, 1e-6 * np.eye(2), atol=1e-18)

    def test_single_coupling(self):
        eps = 1e-6
        bm = BoltzmannMachine([[0.0, 1.0], [1.0, 0.0]], [0.0, 0.0])
        model = relaxation_from_bm(bm, eps=eps)
        assert np.allclose(model.diag_shift, 1.0 + eps)
        target = bm.W + (1.0 + eps) * np.eye(2)
        assert np.max(np.abs(model.Q @ model.Q.T - target)) < 1e-8

    def test_generated_instance_reconstruction(self):
        bm = generate_bm_params(4, 12)
        model = relaxation_from_bm(bm)
        target = bm.W + np.diag(model.diag_shift)
        assert np.max(np.abs(model.Q @ model.Q.T - target)) < 1e-8

    def test_rank_reduction_on_duplicate_minima(self):
        # ring coupling: spectrum {2, -1, -1}, so a tiny eps drops two modes
        W = np.ones((3, 3)) - np.eye(3)
        bm = BoltzmannMachine(W, np.zeros(3))
        model = relaxation_from_bm(bm, eps=1e-12)
        assert model.dim < bm.n_units
        target = W + np.diag(model.diag_shift)
        assert np.max(np.abs(model.Q @ model.Q.T - target)) < 1e-8

    def test_bad_eps(self):
        with pytest.raises(UsageError):
            relaxation_from_bm(generate_bm_params(0, 4), eps=0.0)


class TestRelaxationTrueMoments:
    def test_single_unit_constant(self):
        eps = 1e-6
        bm = BoltzmannMachine([[0.0]], [0.0])
        model = relaxation_from_bm(bm, eps=eps)
        oracle = bm_exhaustive_oracle(bm)
        log_z, mean, cov = relaxation_true_moments(model, oracle)
        # log 2 + eps/2 + log(2 pi)/2 - log 2
        assert log_z == pytest.approx(0.91893903320467274178, rel=1e-12)
        assert mean == pytest.approx([0.0], abs=1e-15)

    def test_zero_coupling_factorizes(self, rng):
        n = 3
        b = rng.standard_normal(n) * 0.5
        bm = BoltzmannMachine(np.zeros((n, n)), b)
        oracle = bm_exhaustive_oracle(bm)
        assert oracle.mean_s == pytest.approx(np.tanh(b), abs=1e-12)
        expected_second = np.outer(np.tanh(b), np.tanh(b))
        np.fill_diagonal(expected_second, 1.0)
        assert np.allclose(oracle.second_moment_s, expected_second, atol=1e-12)

        model = relaxation_from_bm(bm)
        _, mean, cov = relaxation_true_moments(model, oracle)
        assert mean == pytest.approx(model.Q.T @ np.tanh(b), abs=1e-12)
        expect_cov = (
            model.Q.T @ expected_second @ model.Q
            + np.eye(model.dim)
            - np.outer(mean, mean)
        )
        assert np.allclose(cov, expect_cov, atol=1e-12)

    def test_against_exact_ancestral_sampling(self, rng):
        bm = generate_bm_params(9, 6)
        model = relaxation_from_bm(bm)
        oracle = bm_exhaustive_oracle(bm)
        _, mean, cov = relaxation_true_moments(model, oracle)
        n = 40_000
        s = bm_exact_sampler(bm.W, bm.b, n, rng)
        x = s @ model.Q + rng.standard_normal((n, model.dim))
        emp_mean = x.mean(axis=0)
        se = x.std(axis=0, ddof=1) / math.sqrt(n)
        assert np.all(np.abs(emp_mean - mean) < 5 * se)


class TestGenerateBmParams:
    def test_deterministic(self):
        a = generate_bm_params(7, 12)
        b = generate_bm_params(7, 12)
        assert np.array_equal(a.W, b.W) and np.array_equal(a.b, b.b)

    def test_symmetric_zero_diagonal(self):
        bm = generate_bm_params(2, 10)
        assert np.allclose(bm.W, bm.W.T)
        assert np.all(np.diag(bm.W) == 0.0)

    def test_construction_replicates(self):
        # re-derive the orthogonal basis with the same draws and check it
        seed, n = 7, 12
        rng = np.random.default_rng(np.uint64(seed))
        A = rng.standard_normal((n, n))
        Qf, Rf = np.linalg.qr(A)
        signs = np.sign(np.diag(Rf))
        signs[signs == 0] = 1.0
        R = Qf * signs
        assert np.max(np.abs(R.T @ R - np.eye(n))) < 1e-10
        e = 6.0 * np.tanh(2.0 * rng.standard_normal(n))
        V = (R * e) @ R.T
        bm = generate_bm_params(seed, n)
        off = ~np.eye(n, dtype=bool)
        assert np.allclose(bm.W[off], V[off], atol=1e-12)

    def test_eigenvalue_bound(self):
        bm = generate_bm_params(5, 12, s1=6.0, s2=2.0)
        # W differs from V only on the diagonal; eigenvalues stay bounded
        vals = np.linalg.eigvalsh(bm.W)
        assert np.all(np.abs(vals) < 6.0 + 6.0)  # |e_i| < s1, diag shift < s1

    def test_min_units(self):
        with pytest.raises(UsageError):
            generate_bm_params(0, 1)


class TestGaussianDensity:
    def test_matches_scipy_logpdf(self, rng):
        mean = rng.standard_normal(3)
        A = rng.standard_normal((3, 3))
        cov = A @ A.T + 3 * np.eye(3)
        g = GaussianDensity(mean, cov)
        ref = multivariate_normal(mean=mean, cov=cov)
        for _ in range(10):
            x = rng.standard_normal(3) * 2
            assert g.neg_log_pdf(x) == pytest.approx(-ref.logpdf(x), rel=1e-12)

    def test_normalized_by_quadrature(self):
        g = GaussianDensity([0.7], [[2.3]])
        val, _ = quad(lambda t: math.exp(-g.neg_log_pdf(np.array([t]))), -30, 30)
        assert val == pytest.approx(1.0, abs=1e-9)

    def test_gradient_matches_fd(self, rng):
        g = GaussianDensity([0.5, -1.0], [[2.0, 0.3], [0.3, 0.5]])
        for _ in range(20):
            x = rng.standard_normal(2) * 2
            assert gradient_rel_error(g.neg_log_pdf, g.gradient, x) < 1e-5

    def test_sampler_moments(self, rng):
        mean = np.array([1.0, -2.0])
        cov = np.array([[1.5, 0.4], [0.4, 0.7]])
        g = GaussianDensity(mean, cov)
        n = 50_000
        draws = np.array([g.sample(rng) for _ in range(n)])
        se = np.sqrt(np.diag(cov) / n)
        assert np.all(np.abs(draws.mean(axis=0) - mean) < 4 * se)
        emp_cov = np.cov(draws.T)
        assert np.max(np.abs(emp_cov - cov)) < 0.05

    def test_not_spd_raises(self):
        from ctmc import NumericalError

        with pytest.raises(NumericalError):
            GaussianDensity([0.0, 0.0], [[1.0, 2.0], [2.0, 1.0]])


class TestGaussianMixture:
    def test_unit_normalizer(self, bimodal_target):
        val, _ = quad(
            lambda t: math.exp(-bimodal_target.potential(np.array([t]))), -15, 15
        )
        assert val == pytest.approx(1.0, abs=1e-8)

    def test_weight_validation(self):
        with pytest.raises(UsageError):
            GaussianMixtureModel([0.5, 0.6], [[0.0], [1.0]], variances=[[1.0], [1.0]])

    def test_gradient_matches_fd(self, bimodal_target, rng):
        for _ in range(25):
            x = rng.standard_normal(1) * 3
            assert (
                gradient_rel_error(bimodal_target.potential, bimodal_target.gradient, x)
                < 1e-5
            )

    def test_known_moments_match_sampling(self, bimodal_target, rng):
        n = 100_000
        draws = np.array([bimodal_target.sample(rng) for _ in range(n)])[:, 0]
        mean = bimodal_target.known_mean[0]
        var = bimodal_target.known_cov[0, 0]
        assert abs(draws.mean() - mean) < 4 * math.sqrt(var / n)
        assert abs(draws.var() - var) < 0.1

    def test_tail_mass_matches_quadrature(self, bimodal_target):
        val, _ = quad(
            lambda t: math.exp(-bimodal_target.potential(np.array([t]))), 0.0, 15
        )
        assert bimodal_target.tail_mass(0.0) == pytest.approx(val, abs=1e-8)

    def test_full_covariance_2d(self, rng):
        gm = GaussianMixtureModel(
            [0.5, 0.5],
            [[-1.0, 0.0], [1.0, 0.5]],
            covariances=[np.eye(2), [[1.0, 0.3], [0.3, 0.5]]],
        )
        for _ in range(10):
            x = rng.standard_normal(2)
            assert gradient_rel_error(gm.potential, gm.gradient, x) < 1e-5


class TestCustomPotential:
    def test_wraps_callables(self):
        m = CustomPotential(2, lambda x: 0.5 * float(x @ x), lambda x: x)
        assert m.potential(np.array([1.0, 2.0])) == pytest.approx(2.5)
        assert m.kernel_spec() is None


class TestSerialization:
    def test_gaussian_round_trip(self):
        g = GaussianDensity([1.0, 2.0], [[2.0, 0.1], [0.1, 1.0]])
        g2 = model_from_dict(g.to_dict())
        assert np.allclose(g2.mean, g.mean) and np.allclose(g2.covariance, g.covariance)

    def test_mixture_round_trip(self, bimodal_target):
        m2 = model_from_dict(bimodal_target.to_dict())
        assert np.allclose(m2.weights, bimodal_target.weights)
        assert np.allclose(m2.means, bimodal_target.means)
        assert np.allclose(m2.covariances, bimodal_target.covariances)

    def test_relaxation_round_trip(self):
        bm = generate_bm_params(3, 5)
        model = relaxation_from_bm(bm)
        m2 = model_from_dict(model.to_dict())
        assert np.allclose(m2.Q, model.Q)
        assert np.allclose(m2.source.W, bm.W)

    def test_unknown_type(self):
        with pytest.raises(UsageError):
            model_from_dict({"type": "whatever"})


class TestBoltzmannValidation:
    def test_rejects_asymmetric(self):
        with pytest.raises(UsageError):
            BoltzmannMachine([[0.0, 1.0], [0.5, 0.0]], [0.0, 0.0])

    def test_rejects_nonzero_diagonal(self):
        with pytest.raises(UsageError):
            BoltzmannMachine([[1.0, 0.0], [0.0, 0.0]], [0.0, 0.0])
