import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wcfar.errors import InfeasibleMomentsError
from wcfar.special_math import (
    GammaParams,
    GaussianParams,
    InvGammaParams,
    digamma,
    fit_gamma_from_expectations,
    fit_inv_gamma_from_expectations,
    gamma_fit_objective,
    inv_gamma_fit_objective,
    normal_cdf,
    sample_gamma,
    sample_inv_gamma,
)
from wcfar.streams import RngStream

from oracles import gamma_objective_grid, inv_gamma_objective_grid

EULER_GAMMA = 0.5772156649015328606


class TestParams:
    @pytest.mark.parametrize("alpha,beta", [(0.0, 1.0), (-1.0, 1.0), (1.0, 0.0), (1.0, -2.0), (np.nan, 1.0)])
    def test_gamma_rejects_bad_params(self, alpha, beta):
        with pytest.raises(ValueError):
            GammaParams(alpha, beta)

    @pytest.mark.parametrize("a,b", [(0.0, 1.0), (1.0, 0.0), (np.inf, 1.0)])
    def test_inv_gamma_rejects_bad_params(self, a, b):
        with pytest.raises(ValueError):
            InvGammaParams(a, b)

    @pytest.mark.parametrize("mean,var", [(0.0, 0.0), (0.0, -1.0), (np.nan, 1.0), (0.0, np.inf)])
    def test_gaussian_rejects_bad_params(self, mean, var):
        with pytest.raises(ValueError):
            GaussianParams(mean, var)


class TestNormalCdf:
    def test_symmetry_at_zero(self):
        assert normal_cdf(0.0, GaussianParams(0.0, 1.0)) == pytest.approx(0.5, abs=1e-15)

    @pytest.mark.parametrize("mean,var", [(0.0, 1.0), (-3.2, 0.25), (10.0, 7.0)])
    def test_half_at_mean(self, mean, var):
        assert normal_cdf(mean, GaussianParams(mean, var)) == pytest.approx(0.5, abs=1e-15)

    def test_standard_value(self):
        # reference from the exact error-function identity Phi(1) = (1 + erf(1/sqrt 2))/2
        reference = 0.5 * (1.0 + math.erf(1.0 / math.sqrt(2.0)))
        assert reference == pytest.approx(0.8413447460685429, abs=1e-15)
        assert normal_cdf(1.0, GaussianParams(0.0, 1.0)) == pytest.approx(reference, abs=1e-12)

    def test_infinite_limits(self):
        p = GaussianParams(2.0, 3.0)
        assert normal_cdf(-np.inf, p) == 0.0
        assert normal_cdf(np.inf, p) == 1.0

    def test_rejects_nan(self):
        with pytest.raises(ValueError):
            normal_cdf(np.nan, GaussianParams(0.0, 1.0))

    @settings(max_examples=300)
    @given(
        x=st.floats(-50, 50),
        dx=st.floats(0, 10),
        mean=st.floats(-10, 10),
        var=st.floats(1e-3, 100),
    )
    def test_monotone_and_bounded(self, x, dx, mean, var):
        p = GaussianParams(mean, var)
        lo, hi = normal_cdf(x, p), normal_cdf(x + dx, p)
        assert 0.0 <= lo <= hi <= 1.0

    def test_bounded_on_large_random_batch(self):
        rng = RngStream(7).generator()
        x = rng.normal(0.0, 50.0, size=100_000)
        values = normal_cdf(x, GaussianParams(1.0, 4.0))
        assert np.all((values >= 0.0) & (values <= 1.0))
        order = np.argsort(x)
        assert np.all(np.diff(values[order]) >= 0.0)


class TestDigamma:
    def test_euler_mascheroni(self):
        assert digamma(1.0) == pytest.approx(-EULER_GAMMA, rel=1e-14)

    def test_recurrence_at_two(self):
        assert digamma(2.0) == pytest.approx(digamma(1.0) + 1.0, rel=1e-14)

    def test_half_closed_form(self):
        assert digamma(0.5) == pytest.approx(-EULER_GAMMA - 2.0 * math.log(2.0), rel=1e-13)

    @pytest.mark.parametrize("x", [0.0, -1.0, np.nan])
    def test_rejects_nonpositive(self, x):
        with pytest.raises(ValueError):
            digamma(x)

    @settings(max_examples=300)
    @given(x=st.floats(0.1, 100.0))
    def test_recurrence_property(self, x):
        assert digamma(x + 1.0) - digamma(x) - 1.0 / x == pytest.approx(0.0, abs=1e-12)


class TestSamplers:
    def test_gamma_moments(self):
        draws = sample_gamma(GammaParams(3.0, 1.5), RngStream(11), size=1_000_000)
        assert draws.mean() == pytest.approx(2.0, abs=0.02)

    def test_exponential_special_case(self):
        draws = sample_gamma(GammaParams(1.0, 1.0), RngStream(12), size=1_000_000)
        assert np.mean(draws > 1.0) == pytest.approx(math.exp(-1.0), abs=0.002)

    def test_gamma_variance(self):
        draws = sample_gamma(GammaParams(2.0, 4.0), RngStream(13), size=1_000_000)
        assert draws.var() == pytest.approx(0.125, rel=0.05)

    def test_inv_gamma_mean(self):
        draws = sample_inv_gamma(InvGammaParams(4.0, 6.0), RngStream(14), size=1_000_000)
        assert draws.mean() == pytest.approx(2.0, abs=0.02)

    def test_inv_gamma_precision_and_log_moments(self):
        p = InvGammaParams(4.0, 6.0)
        draws = sample_inv_gamma(p, RngStream(15), size=1_000_000)
        assert np.mean(1.0 / draws) == pytest.approx(4.0 / 6.0, rel=0.01)
        # E[log x] = log b - psi(a), forward computed
        expected = math.log(6.0) - digamma(4.0)
        assert expected == pytest.approx(0.5356418007962545, abs=1e-12)
        assert np.mean(np.log(draws)) == pytest.approx(expected, abs=0.003)

    def test_samplers_reproducible(self):
        a = sample_gamma(GammaParams(2.5, 0.7), RngStream(99, (4,)), size=1000)
        b = sample_gamma(GammaParams(2.5, 0.7), RngStream(99, (4,)), size=1000)
        assert np.array_equal(a, b)
        c = sample_inv_gamma(InvGammaParams(3.0, 2.0), RngStream(99).child(5), size=1000)
        d = sample_inv_gamma(InvGammaParams(3.0, 2.0), RngStream(99).child(5), size=1000)
        assert np.array_equal(c, d)


class TestGammaFit:
    def test_round_trip_known_point(self):
        # moments of Gamma(3, 1.5): E[x] = 2, E[log x] = psi(3) - log(1.5)
        mean_log = float(digamma(3.0) - math.log(1.5))
        fitted = fit_gamma_from_expectations(2.0, mean_log)
        assert fitted.alpha == pytest.approx(3.0, rel=1e-9)
        assert fitted.beta == pytest.approx(1.5, rel=1e-9)

    def test_unit_exponential(self):
        fitted = fit_gamma_from_expectations(1.0, -EULER_GAMMA)
        assert fitted.alpha == pytest.approx(1.0, rel=1e-9)
        assert fitted.beta == pytest.approx(1.0, rel=1e-9)

    def test_near_degenerate_gap_does_not_diverge(self):
        fitted = fit_gamma_from_expectations(5.0, math.log(5.0) - 1e-9)
        assert math.isfinite(fitted.alpha) and fitted.alpha > 1e6
        assert fitted.beta == pytest.approx(fitted.alpha / 5.0, rel=1e-12)

    def test_infeasible_moments(self):
        with pytest.raises(InfeasibleMomentsError):
            fit_gamma_from_expectations(2.0, math.log(2.0))
        with pytest.raises(InfeasibleMomentsError):
            fit_gamma_from_expectations(2.0, math.log(2.0) + 0.5)

    @settings(max_examples=100, deadline=None)
    @given(
        alpha=st.floats(0.05, 500.0),
        beta=st.floats(1e-3, 1e3),
    )
    def test_round_trip_identity(self, alpha, beta):
        p = GammaParams(alpha, beta)
        fitted = fit_gamma_from_expectations(p.mean, p.mean_log)
        assert fitted.alpha == pytest.approx(alpha, rel=1e-6)
        assert fitted.beta == pytest.approx(beta, rel=1e-6)

    def test_beats_grid_oracle(self):
        rng = RngStream(21).generator()
        for _ in range(100):
            alpha = float(np.exp(rng.uniform(np.log(0.1), np.log(100.0))))
            beta = float(np.exp(rng.uniform(np.log(0.05), np.log(50.0))))
            p = GammaParams(alpha, beta)
            fitted = fit_gamma_from_expectations(p.mean, p.mean_log)
            ours = gamma_fit_objective(fitted, p.mean, p.mean_log)
            best, _, _ = gamma_objective_grid(p.mean, p.mean_log, fitted.alpha, fitted.beta)
            assert ours >= best - 1e-8


class TestInvGammaFit:
    def test_round_trip_known_point(self):
        p = InvGammaParams(4.0, 6.0)
        fitted = fit_inv_gamma_from_expectations(p.mean_inv, p.mean_log)
        assert fitted.a == pytest.approx(4.0, rel=1e-9)
        assert fitted.b == pytest.approx(6.0, rel=1e-9)

    def test_unit_case(self):
        fitted = fit_inv_gamma_from_expectations(1.0, float(-digamma(1.0)))
        assert fitted.a == pytest.approx(1.0, rel=1e-9)
        assert fitted.b == pytest.approx(1.0, rel=1e-9)

    def test_infeasible_moments(self):
        with pytest.raises(InfeasibleMomentsError):
            fit_inv_gamma_from_expectations(2.0, -math.log(2.0))

    def test_beats_grid_oracle(self):
        rng = RngStream(22).generator()
        for _ in range(100):
            a = float(np.exp(rng.uniform(np.log(0.1), np.log(100.0))))
            b = float(np.exp(rng.uniform(np.log(0.05), np.log(50.0))))
            p = InvGammaParams(a, b)
            fitted = fit_inv_gamma_from_expectations(p.mean_inv, p.mean_log)
            ours = inv_gamma_fit_objective(fitted, p.mean_inv, p.mean_log)
            best, _, _ = inv_gamma_objective_grid(p.mean_inv, p.mean_log, fitted.a, fitted.b)
            assert ours >= best - 1e-8
