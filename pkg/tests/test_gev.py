"""GEV mathematics: frozen oracle values, invariants and properties.

High-precision expected values were computed independently with mpmath
(40 significant digits) from the closed forms and frozen here.
"""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import genextreme, kstest

from extremepool import (
    EstimationError,
    GevFit,
    GevParams,
    SampleSizeWarning,
    fit_gev_mle,
    gev_cdf,
    gev_loglik,
    gev_quantile,
    gev_sample,
    ks_test,
    return_level,
)
from extremepool.gev import LOGLIK_FLOOR, _rl_gradient

EULER_GAMMA = 0.5772156649015329


class TestCdf:
    def test_gumbel_at_location(self):
        # exp(-1) at x = mu for xi = 0
        assert gev_cdf(0.0, GevParams(0, 1, 0)) == pytest.approx(np.exp(-1), abs=1e-12)

    def test_lower_support_endpoint(self):
        # x = mu - sigma/xi = -2 for xi = 0.5
        with pytest.warns(UserWarning):
            params = GevParams(0, 1, 0.5)
        assert gev_cdf(-2.0, params) == 0.0
        assert gev_cdf(-2.5, params) == 0.0

    def test_upper_tail_negative_shape(self):
        params = GevParams(0, 1, -0.3)
        # upper endpoint at mu + sigma/0.3
        assert gev_cdf(1.0 / 0.3 + 0.1, params) == 1.0

    def test_frechet_value(self):
        # mpmath: exp(-(1.2)**(-10)) = 0.85086178118451499985...
        assert gev_cdf(2.0, GevParams(0, 1, 0.1)) == pytest.approx(
            0.8508617811845150, abs=1e-12
        )

    def test_matches_scipy(self):
        x = np.linspace(-2, 30, 200)
        for xi in (-0.3, -0.1, 0.1, 0.3):
            params = GevParams(2.0, 3.0, xi)
            np.testing.assert_allclose(
                gev_cdf(x, params),
                genextreme.cdf(x, c=-xi, loc=2.0, scale=3.0),
                atol=1e-12,
            )

    @given(
        x1=st.floats(-50, 50),
        x2=st.floats(-50, 50),
        mu=st.floats(-10, 10),
        sigma=st.floats(0.1, 10),
        xi=st.floats(-0.45, 0.45),
    )
    def test_monotone(self, x1, x2, mu, sigma, xi):
        lo, hi = min(x1, x2), max(x1, x2)
        params = GevParams(mu, sigma, xi)
        assert gev_cdf(lo, params) <= gev_cdf(hi, params)


class TestQuantile:
    def test_gumbel_p99(self):
        # mpmath: -log(-log(0.99)) = 4.60014922677657999772...
        assert gev_quantile(0.99, GevParams(0, 1, 0)) == pytest.approx(
            4.600149226776580, abs=1e-12
        )

    def test_frechet_p99(self):
        # mpmath: ((-log 0.99)**(-0.1) - 1)/0.1 = 5.84097623796322942061...
        assert gev_quantile(0.99, GevParams(0, 1, 0.1)) == pytest.approx(
            5.840976237963229, abs=1e-12
        )

    def test_gumbel_mode_probability(self):
        for mu in (-3.0, 0.0, 11.5):
            assert gev_quantile(np.exp(-1), GevParams(mu, 2.0, 0)) == pytest.approx(
                mu, abs=1e-12
            )

    @pytest.mark.parametrize("p", [0.001, 0.01, 0.5, 0.9, 0.99, 0.999])
    @pytest.mark.parametrize("xi", [-0.3, -1e-9, 0.0, 1e-9, 0.3])
    def test_roundtrip(self, p, xi):
        params = GevParams(1.5, 2.0, xi)
        assert abs(gev_cdf(gev_quantile(p, params), params) - p) < 1e-9

    @pytest.mark.parametrize("p", [0.001, 0.01, 0.5, 0.9, 0.99, 0.999])
    @pytest.mark.parametrize("xi", [1e-7, -1e-7])
    def test_branch_continuity(self, p, xi):
        sigma = 2.0
        near = gev_quantile(p, GevParams(0, sigma, xi))
        gumbel = gev_quantile(p, GevParams(0, sigma, 0.0))
        assert abs(near - gumbel) < 1e-5 * sigma

    def test_domain_errors(self):
        params = GevParams(0, 1, 0.1)
        for p in (0.0, 1.0, -0.2, 1.7):
            with pytest.raises(ValueError):
                gev_quantile(p, params)


class TestLoglik:
    def test_gumbel_at_mode(self):
        assert gev_loglik(GevParams(0, 1, 0), [0.0]) == pytest.approx(-1.0, abs=1e-12)

    def test_log_density_value(self):
        # mpmath: -(1 + 2) log(3.5) - 3.5**-2 = -3.83992155854732847686...
        with pytest.warns(UserWarning):
            params = GevParams(0, 1, 0.5)
        assert gev_loglik(params, [5.0]) == pytest.approx(
            -3.8399215585473285, abs=1e-12
        )

    def test_below_support_sentinel(self):
        with pytest.warns(UserWarning):
            params = GevParams(0, 1, 0.5)
        assert gev_loglik(params, [-100.0]) == LOGLIK_FLOOR

    def test_matches_scipy_logpdf_sum(self):
        # values strictly inside the support for every tested shape
        x = np.linspace(2.0, 20.0, 50)
        for xi in (-0.2, 0.0, 0.2):
            params = GevParams(5.0, 4.0, xi)
            expected = genextreme.logpdf(x, c=-xi, loc=5.0, scale=4.0).sum()
            assert gev_loglik(params, x) == pytest.approx(expected, rel=1e-10)

    def test_empty_sample_rejected(self):
        with pytest.raises(ValueError):
            gev_loglik(GevParams(0, 1, 0), [])


class TestSampling:
    def test_deterministic(self):
        params = GevParams(3.0, 2.0, 0.1)
        a = gev_sample(params, 5, seed=42)
        b = gev_sample(params, 5, seed=42)
        np.testing.assert_array_equal(a, b)
        assert not np.array_equal(a, gev_sample(params, 5, seed=43))

    def test_gumbel_mean_monte_carlo(self):
        # Gumbel mean is mu + sigma * Euler-Mascheroni
        draws = gev_sample(GevParams(0, 1, 0), 10**6, seed=123)
        assert draws.mean() == pytest.approx(EULER_GAMMA, abs=5e-3)

    def test_empirical_cdf_close(self):
        params = GevParams(10.0, 3.0, 0.15)
        draws = gev_sample(params, 10**5, seed=7)
        d = ks_test(draws, params).statistic
        assert d < 0.01

    def test_zero_draws_rejected(self):
        with pytest.raises(ValueError):
            gev_sample(GevParams(0, 1, 0), 0, seed=1)


class TestFit:
    def test_large_sample_consistency(self):
        sample = gev_sample(GevParams(20, 5, 0.1), 10**5, seed=1)
        fit = fit_gev_mle(sample)
        assert fit.converged
        assert 19.9 <= fit.params.location <= 20.1
        assert 4.9 <= fit.params.scale <= 5.1
        assert 0.08 <= fit.params.shape <= 0.12

    def test_beats_independent_optimizer(self):
        # scipy's genextreme.fit is an entirely separate MLE implementation
        sample = gev_sample(GevParams(12, 4, -0.1), 2000, seed=9)
        fit = fit_gev_mle(sample)
        c, loc, scale = genextreme.fit(sample)
        assert fit.params.location == pytest.approx(loc, rel=0.02)
        assert fit.params.scale == pytest.approx(scale, rel=0.02)
        assert fit.params.shape == pytest.approx(-c, abs=0.02)
        scipy_ll = genextreme.logpdf(sample, c=c, loc=loc, scale=scale).sum()
        assert fit.log_likelihood >= scipy_ll - 1e-3

    def test_zero_variance_rejected(self):
        with pytest.raises(EstimationError, match="zero variance"):
            fit_gev_mle(np.full(30, 7.5))

    def test_order_invariance(self):
        sample = gev_sample(GevParams(20, 5, 0.1), 500, seed=2)
        shuffled = sample.copy()
        np.random.default_rng(0).shuffle(shuffled)
        a = fit_gev_mle(sample)
        b = fit_gev_mle(shuffled)
        assert (a.params.location, a.params.scale, a.params.shape) == (
            b.params.location,
            b.params.scale,
            b.params.shape,
        )
        np.testing.assert_array_equal(a.covariance, b.covariance)
        assert a.log_likelihood == b.log_likelihood
        assert a.n_iterations == b.n_iterations

    def test_small_sample_flagged(self):
        sample = gev_sample(GevParams(20, 5, 0.1), 15, seed=3)
        with pytest.warns(SampleSizeWarning):
            fit = fit_gev_mle(sample)
        assert not fit.converged
        with pytest.raises(EstimationError):
            return_level(fit, 100)

    def test_local_maximum(self):
        sample = gev_sample(GevParams(20, 5, 0.1), 300, seed=4)
        fit = fit_gev_mle(sample)
        best = gev_loglik(fit.params, sample)
        rng = np.random.default_rng(11)
        for _ in range(100):
            candidate = GevParams(
                fit.params.location * (1 + rng.uniform(-0.01, 0.01)),
                fit.params.scale * (1 + rng.uniform(-0.01, 0.01)),
                fit.params.shape + rng.uniform(-0.01, 0.01),
            )
            assert gev_loglik(candidate, sample) <= best

    def test_covariance_shrinks_with_n(self):
        small = fit_gev_mle(gev_sample(GevParams(20, 5, 0.1), 100, seed=5))
        large = fit_gev_mle(gev_sample(GevParams(20, 5, 0.1), 10000, seed=5))
        assert np.all(np.diag(large.covariance) < np.diag(small.covariance))


class TestReturnLevel:
    def _exact_fit(self, mu=0.0, sigma=1.0, xi=0.0):
        return GevFit(
            params=GevParams(mu, sigma, xi),
            covariance=np.zeros((3, 3)),
            log_likelihood=0.0,
            n_samples=1000,
            converged=True,
            n_iterations=0,
        )

    def test_zero_covariance_collapses_interval(self):
        est = return_level(self._exact_fit(), 100)
        assert est.level == pytest.approx(4.600149226776580, abs=1e-12)
        assert est.ci_low == est.level == est.ci_high

    def test_monotone_in_return_period(self):
        fit = fit_gev_mle(gev_sample(GevParams(20, 5, 0.1), 500, seed=6))
        levels = [return_level(fit, T).level for T in (2, 5, 10, 30, 100, 500)]
        assert all(a < b for a, b in zip(levels, levels[1:]))

    def test_non_converged_rejected(self):
        bad = GevFit(
            params=GevParams(0, 1, 0),
            covariance=np.eye(3),
            log_likelihood=0.0,
            n_samples=30,
            converged=False,
            n_iterations=2000,
        )
        with pytest.raises(EstimationError):
            return_level(bad, 100)

    @pytest.mark.parametrize("xi", [-0.2, -1e-9, 0.0, 0.2])
    @pytest.mark.parametrize("T", [10.0, 30.0, 100.0])
    def test_gradient_matches_finite_differences(self, xi, T):
        mu, sigma = 10.0, 3.0
        p = 1.0 - 1.0 / T
        grad = _rl_gradient(GevParams(mu, sigma, xi), T)
        h = 1e-6

        def level(m, s, x):
            return gev_quantile(p, GevParams(m, s, x))

        fd = np.array(
            [
                (level(mu + h, sigma, xi) - level(mu - h, sigma, xi)) / (2 * h),
                (level(mu, sigma + h, xi) - level(mu, sigma - h, xi)) / (2 * h),
                (level(mu, sigma, xi + h) - level(mu, sigma, xi - h)) / (2 * h),
            ]
        )
        np.testing.assert_allclose(grad, fd, rtol=1e-4, atol=1e-7)

    def test_interval_scales_with_confidence(self):
        fit = fit_gev_mle(gev_sample(GevParams(20, 5, 0.1), 500, seed=8))
        w90 = return_level(fit, 100, confidence=0.90).width
        w99 = return_level(fit, 100, confidence=0.99).width
        assert w90 < w99


class TestKs:
    def test_single_median_observation(self):
        params = GevParams(0, 1, 0)
        x = gev_quantile(0.5, params)
        res = ks_test([x], params)
        assert res.statistic == pytest.approx(0.5, abs=1e-12)

    def test_plotting_position_sample(self):
        params = GevParams(5, 2, 0.1)
        n = 100
        sample = gev_quantile((np.arange(1, n + 1) - 0.5) / n, params)
        res = ks_test(sample, params)
        assert res.statistic == pytest.approx(0.005, abs=1e-12)
        assert res.passed

    def test_wrong_model_rejected(self):
        draws = gev_sample(GevParams(0, 1, 0), 500, seed=10)
        res = ks_test(draws, GevParams(5, 1, 0))
        assert not res.passed and res.p_value < 1e-6

    def test_agrees_with_scipy_kstest(self):
        params = GevParams(8.0, 2.5, 0.1)
        draws = gev_sample(params, 200, seed=12)
        ours = ks_test(draws, params)
        ref = kstest(draws, lambda x: gev_cdf(x, params))
        assert ours.statistic == pytest.approx(ref.statistic, abs=1e-12)
        # scipy uses the exact small-sample distribution; asymptotic p is close at n=200
        assert ours.p_value == pytest.approx(ref.pvalue, abs=0.02)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31), n=st.integers(25, 60))
def test_fit_deterministic_under_permutation(seed, n):
    sample = gev_sample(GevParams(15, 4, 0.05), n, seed=seed)
    permuted = sample[np.random.default_rng(seed).permutation(n)]
    a = fit_gev_mle(sample)
    b = fit_gev_mle(permuted)
    assert a.params == b.params
    np.testing.assert_array_equal(a.covariance, b.covariance)
