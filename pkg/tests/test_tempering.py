import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ctmc import (
    CustomPotential,
    DomainError,
    ExtendedState,
    GaussianDensity,
    TemperedSystem,
    beta,
    beta_grad,
    delta,
    extended_gradients,
    extended_hamiltonian,
    joint_log_density_x_beta,
    log_beta_grad,
    log_w0,
    log_w1,
    sample_beta_conditional,
    system_from_dict,
    truncated_exponential,
)
from ctmc.tempering import extended_potential
from helpers import FakeBase, central_difference_gradient, ks_statistic, trunc_exp_cdf

LOG_2PI = math.log(2 * math.pi)


def zero_system(dim=1, log_zeta=0.0, control_mass=1.0):
    """System with phi = psi = 0 so Delta is exactly log zeta."""
    target = CustomPotential(dim, lambda x: 0.0, lambda x: np.zeros(dim))
    base = FakeBase(dim, lambda x: 0.0, lambda x: np.zeros(dim))
    return TemperedSystem(
        target=target, base=base, log_zeta=log_zeta, control_mass=control_mass
    )


class TestControlMap:
    def test_midpoint(self):
        assert beta(0.0) == 0.5
        assert log_beta_grad(0.0) == pytest.approx(-2 * math.log(2), rel=1e-15)
        assert beta_grad(0.0) == pytest.approx(0.25, rel=1e-15)

    def test_saturation_is_stable(self):
        assert beta(-40.0) == pytest.approx(4.2483542552915890e-18, rel=1e-12)
        assert log_beta_grad(40.0) == pytest.approx(-40.0, abs=1e-9)
        assert np.isfinite(log_beta_grad(800.0))
        assert np.isfinite(log_beta_grad(-800.0))

    @given(st.floats(min_value=-100, max_value=100))
    @settings(max_examples=200, deadline=None)
    def test_sigmoid_symmetry(self, u):
        assert beta(-u) == pytest.approx(1.0 - beta(u), abs=1e-15)
        assert 0.0 <= beta(u) <= 1.0

    def test_monotone(self):
        u = np.linspace(-30, 30, 501)
        b = beta(u)
        assert np.all(np.diff(b) >= 0.0)

    def test_log_grad_matches_naive_in_safe_range(self):
        # naive log(sigma (1-sigma)) itself loses precision past |u| ~ 10
        for u in np.linspace(-8, 8, 33):
            naive = math.log(beta_grad(u))
            assert log_beta_grad(u) == pytest.approx(naive, rel=1e-12)


class TestDelta:
    def test_identical_target_base(self):
        system = zero_system()
        assert delta(system, np.zeros(1)) == 0.0

    def test_unnormalized_gaussian_constant(self):
        # phi = x^2/2 unnormalized, base standard normal:
        # Delta = phi + log zeta - psi = -log(2 pi)/2, constant in x
        target = CustomPotential(1, lambda x: 0.5 * float(x @ x), lambda x: x)
        base = GaussianDensity([0.0], [[1.0]])
        system = TemperedSystem(target=target, base=base, log_zeta=0.0)
        for x in ([0.0], [1.3], [-2.0]):
            assert delta(system, np.array(x)) == pytest.approx(
                -0.91893853320467274178, rel=1e-12
            )

    def test_bimodal_direct_formula(self, bimodal_system):
        # independent evaluation from scipy building blocks
        from scipy.stats import norm

        x = 0.0
        mix = 0.65 * norm.pdf(x, -2.5, 0.6) + 0.35 * norm.pdf(x, 2.5, 0.6)
        m = bimodal_system.base.known_mean[0]
        sd = math.sqrt(bimodal_system.base.known_cov[0, 0])
        expected = -math.log(mix) + math.log(norm.pdf(x, m, sd))
        assert delta(bimodal_system, np.array([x])) == pytest.approx(expected, rel=1e-10)


class TestExtendedHamiltonian:
    def test_all_zero_state(self):
        system = zero_system()
        state = ExtendedState(x=np.zeros(1), u=0.0, p=np.zeros(1), v=0.0)
        assert extended_hamiltonian(system, state) == pytest.approx(
            2 * math.log(2), rel=1e-15
        )

    def test_log_zeta_linearity(self, bimodal_system):
        state = ExtendedState(x=np.array([0.3]), u=0.7, p=np.array([0.2]), v=-0.1)
        shifted = bimodal_system.with_updates(log_zeta=bimodal_system.log_zeta + 2.5)
        dh = extended_hamiltonian(shifted, state) - extended_hamiltonian(
            bimodal_system, state
        )
        assert dh == pytest.approx(beta(0.7) * 2.5, rel=1e-12)

    def test_random_states_against_formula(self, bimodal_system, rng):
        for _ in range(20):
            state = ExtendedState(
                x=rng.standard_normal(1) * 2,
                u=float(rng.standard_normal() * 3),
                p=rng.standard_normal(1),
                v=float(rng.standard_normal()),
            )
            b = 1.0 / (1.0 + math.exp(-state.u))
            expected = (
                b * (bimodal_system.target.potential(state.x) + bimodal_system.log_zeta)
                + (1 - b) * bimodal_system.base.neg_log_pdf(state.x)
                - math.log(b * (1 - b))
                + 0.5 * float(state.p @ state.p)
                + 0.5 * state.v**2
            )
            assert extended_hamiltonian(bimodal_system, state) == pytest.approx(
                expected, rel=1e-12
            )

    def test_kinetic_uses_masses(self):
        system = zero_system(control_mass=4.0)
        state = ExtendedState(x=np.zeros(1), u=0.0, p=np.zeros(1), v=2.0)
        base_h = 2 * math.log(2)
        assert extended_hamiltonian(system, state) == pytest.approx(
            base_h + 0.5 * 4.0 / 4.0, rel=1e-12
        )


class TestExtendedGradients:
    def test_u_zero_quarter_delta(self, bimodal_system):
        x = np.array([1.2])
        state = ExtendedState(x=x, u=0.0)
        _, dh_du = extended_gradients(bimodal_system, state)
        assert dh_du == pytest.approx(delta(bimodal_system, x) / 4.0, rel=1e-12)

    def test_zero_delta_independent_of_x(self):
        system = zero_system()
        for u in (-2.0, 0.0, 1.5):
            for xv in (0.0, 4.0):
                _, dh_du = extended_gradients(system, ExtendedState(x=np.array([xv]), u=u))
                sigma = 1.0 / (1.0 + math.exp(-u))
                assert dh_du == pytest.approx(-(1.0 - 2.0 * sigma), rel=1e-12)

    def test_matches_finite_differences(self, bimodal_system, rng):
        for _ in range(20):
            x = rng.standard_normal(1) * 2
            u = float(rng.standard_normal() * 2)

            def f(z):
                return extended_potential(bimodal_system, z[:1], z[1])

            fd = central_difference_gradient(f, np.array([x[0], u]))
            gx, gu = extended_gradients(bimodal_system, ExtendedState(x=x, u=u))
            an = np.array([gx[0], gu])
            scale = max(1.0, float(np.max(np.abs(fd))))
            assert np.max(np.abs(an - fd)) / scale < 1e-5


class TestJointLogDensity:
    def test_beta_endpoints(self, bimodal_system):
        x = np.array([0.4])
        phi = bimodal_system.target.potential(x)
        psi = bimodal_system.base.neg_log_pdf(x)
        assert joint_log_density_x_beta(bimodal_system, x, 0.0) == pytest.approx(-psi)
        assert joint_log_density_x_beta(bimodal_system, x, 1.0) == pytest.approx(
            -phi - bimodal_system.log_zeta
        )

    def test_out_of_range(self, bimodal_system):
        with pytest.raises(DomainError):
            joint_log_density_x_beta(bimodal_system, np.array([0.0]), 1.5)

    def test_change_of_variables_identity(self, bimodal_system, rng):
        # log p(x, beta(u)) + log beta'(u) = -extended potential, pointwise
        for _ in range(20):
            x = rng.standard_normal(1) * 2
            u = float(rng.standard_normal() * 3)
            lhs = joint_log_density_x_beta(bimodal_system, x, beta(u)) + log_beta_grad(u)
            rhs = -extended_potential(bimodal_system, x, u)
            assert lhs == pytest.approx(rhs, rel=1e-12)


class TestBetaConditional:
    def test_zero_rate_uniform(self, rng):
        draws = np.array([truncated_exponential(0.0, rng.random()) for _ in range(20_000)])
        assert ks_statistic(draws, lambda b: np.clip(b, 0, 1)) < 0.012

    def test_inverse_cdf_value(self):
        assert truncated_exponential(5.0, 0.5) == pytest.approx(
            0.13728636641416544816, rel=1e-14
        )

    @pytest.mark.parametrize("rate", [-5.0, 0.0, 5.0])
    def test_ks_against_analytic_cdf(self, rate, rng):
        draws = np.array(
            [truncated_exponential(rate, rng.random()) for _ in range(20_000)]
        )
        assert ks_statistic(draws, lambda b: trunc_exp_cdf(rate, b)) < 0.012

    @given(
        st.floats(min_value=-800, max_value=800),
        st.floats(min_value=0.0, max_value=1.0, exclude_max=True),
    )
    @settings(max_examples=300, deadline=None)
    def test_always_in_unit_interval(self, rate, u):
        assert 0.0 <= truncated_exponential(rate, u) <= 1.0

    def test_uses_system_delta(self, bimodal_system, rng):
        # one draw consumes exactly one uniform
        r1 = np.random.default_rng(7)
        r2 = np.random.default_rng(7)
        b = sample_beta_conditional(bimodal_system, np.array([0.5]), r1)
        d = delta(bimodal_system, np.array([0.5]))
        assert b == pytest.approx(truncated_exponential(d, r2.random()), rel=1e-15)


class TestLogWeights:
    def test_zero_delta(self):
        assert log_w0(0.0) == 0.0
        assert log_w1(0.0) == 0.0

    def test_log2_values(self):
        d = math.log(2.0)
        assert log_w0(d) == pytest.approx(0.3266342599782809824, rel=1e-13)
        assert log_w1(d) == pytest.approx(-0.36651292058166432701, rel=1e-13)

    def test_huge_delta_no_overflow(self):
        assert log_w1(800.0) == pytest.approx(-793.3153882723320727, rel=1e-14)
        assert log_w0(-800.0) == pytest.approx(-793.3153882723320727, rel=1e-14)
        assert np.isfinite(log_w0(800.0)) and np.isfinite(log_w1(-800.0))

    @given(st.floats(min_value=-700, max_value=700))
    @settings(max_examples=300, deadline=None)
    def test_ratio_identity(self, d):
        # log w1 - log w0 = -Delta, the conditional-probability ratio
        assert log_w1(d) - log_w0(d) == pytest.approx(-d, abs=1e-12)

    def test_array_input(self):
        d = np.array([-5.0, 0.0, 5.0, 300.0])
        out0, out1 = log_w0(d), log_w1(d)
        assert out0.shape == d.shape
        for i, di in enumerate(d):
            assert out0[i] == pytest.approx(log_w0(float(di)), rel=1e-15)
            assert out1[i] == pytest.approx(log_w1(float(di)), rel=1e-15)

    def test_series_region_continuity(self):
        # around the cutoff the series d/2 - d^2/24 is exact to ~1e-17
        for d in (1e-9, 1e-8, 1.0000001e-8, 2e-8, -1e-9, -2e-8):
            series = d / 2.0 - d * d / 24.0
            assert log_w0(d) == pytest.approx(series, abs=1e-14)


class TestSeparation:
    def test_zero_delta_factorizes(self):
        # with Delta == 0 the extended potential is psi(x) - log beta'(u)
        system = zero_system()
        for u in (-3.0, 0.0, 2.0):
            for xv in (-1.0, 0.5):
                val = extended_potential(system, np.array([xv]), u)
                assert val == pytest.approx(-log_beta_grad(u), rel=1e-12)

    def test_logistic_marginal_exact_sampling(self, rng):
        # u-marginal propto beta'(u); exact draws via logit of a uniform
        draws = np.log(rng.random(30_000)) - np.log1p(-rng.random(30_000))
        # independent draws from the logistic law via inverse CDF
        u = rng.random(30_000)
        draws = np.log(u) - np.log1p(-u)
        ks = ks_statistic(draws, lambda t: 1.0 / (1.0 + np.exp(-t)))
        assert ks < 0.012


class TestSystemSerialization:
    def test_round_trip(self, bimodal_system):
        d = bimodal_system.to_dict()
        s2 = system_from_dict(d)
        assert s2.log_zeta == bimodal_system.log_zeta
        assert s2.control_mass == bimodal_system.control_mass
        x = np.array([0.7])
        assert s2.target.potential(x) == pytest.approx(
            bimodal_system.target.potential(x)
        )
        assert s2.base.neg_log_pdf(x) == pytest.approx(
            bimodal_system.base.neg_log_pdf(x)
        )

    def test_dim_mismatch(self):
        t = CustomPotential(2, lambda x: 0.0, lambda x: np.zeros(2))
        b = FakeBase(1, lambda x: 0.0, lambda x: np.zeros(1))
        from ctmc import DimensionError

        with pytest.raises(DimensionError):
            TemperedSystem(target=t, base=b)
