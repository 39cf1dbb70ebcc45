"""Tests for the shared piecewise-constant hazard model."""

import math

import numpy as np
import pytest
from scipy import optimize, stats

from badge_survival.errors import FitError
from badge_survival.survival_basic import (
    fit_alt_basic,
    fit_null_basic,
    llr_basic,
    loglik_basic,
    wilks_pvalue,
)

from conftest import make_cohort, random_cohort


class TestFitNull:
    """Single hazard: events over total exposure."""

    def test_one_event_one_censored(self):
        fit = fit_null_basic(make_cohort([(0, 2), (0, None)], 4.0))
        assert fit.lambda0 == pytest.approx(1 / 6)
        assert fit.lambda1 == fit.lambda0

    def test_all_censored(self):
        fit = fit_null_basic(make_cohort([(0, None), (1, None)], 4.0))
        assert fit.lambda0 == 0.0
        assert fit.warnings

    def test_single_event(self):
        assert fit_null_basic(make_cohort([(0, 1)], 1.0)).lambda0 == pytest.approx(1.0)

    def test_empty_cohort(self):
        with pytest.raises(FitError):
            fit_null_basic(make_cohort([], 1.0))

    def test_zero_exposure(self):
        with pytest.raises(FitError):
            fit_null_basic(make_cohort([(1, 1)], 1.0))


class TestFitAlt:
    """Separate hazards before and after the badge."""

    def test_two_regimes(self):
        fit = fit_alt_basic(make_cohort([(0, 0.5), (0, 2)], 4.0), tau=1.0)
        assert fit.lambda0 == pytest.approx(1 / 1.5)
        assert fit.lambda1 == pytest.approx(1.0)
        assert fit.n_events_pre == 1 and fit.n_events_post == 1

    def test_equal_to_null(self):
        cohort = make_cohort([(0, 1), (2, 3)], 4.0)
        fit = fit_alt_basic(cohort, tau=2.0)
        assert fit.lambda0 == pytest.approx(1.0)
        assert fit.lambda1 == pytest.approx(1.0)

    def test_no_post_events(self):
        fit = fit_alt_basic(make_cohort([(0, 0.5), (0, 0.7)], 4.0), tau=1.0)
        assert fit.lambda1 == 0.0
        assert any("post-badge" in w for w in fit.warnings)

    def test_mean_time_change(self):
        fit = fit_alt_basic(make_cohort([(0, 0.5), (0, 2)], 4.0), tau=1.0)
        assert fit.mean_time_change == pytest.approx((1 / 1.5) / 1.0 - 1.0)

    def test_matches_numeric_maximum(self, rng):
        """Closed form agrees with bounded scalar maximization of each regime."""
        for _ in range(200):
            cohort = random_cohort(rng)
            tau = float(rng.uniform(1.0, 9.0))
            fit = fit_alt_basic(cohort, tau)
            for which, estimate in ((0, fit.lambda0), (1, fit.lambda1)):
                if estimate == 0.0:
                    continue

                def negative(rate):
                    rates = [fit.lambda0, fit.lambda1]
                    rates[which] = rate
                    return -loglik_basic(cohort, rates[0], rates[1], tau)

                best = optimize.minimize_scalar(
                    negative, bounds=(estimate / 20, estimate * 20), method="bounded",
                    options={"xatol": 1e-12},
                )
                np.testing.assert_allclose(best.x, estimate, rtol=1e-5)

    def test_recovers_piecewise_exponential_hazards(self):
        rng = np.random.default_rng(31)
        tau, horizon, lam0, lam1 = 180.0, 360.0, 0.01, 0.04
        pairs = []
        for s in rng.uniform(0, horizon, size=20_000):
            t = s + rng.exponential(1 / lam0) if s < tau else math.inf
            if t > tau:
                t = max(s, tau) + rng.exponential(1 / lam1)
            pairs.append((s, t if t <= horizon else None))
        fit = fit_alt_basic(make_cohort(pairs, horizon), tau)
        assert fit.lambda0 == pytest.approx(lam0, rel=0.05)
        assert fit.lambda1 == pytest.approx(lam1, rel=0.05)


class TestLoglik:
    """Piecewise-exponential log-likelihood."""

    def test_density(self):
        assert loglik_basic(make_cohort([(0, 1)], 4.0), 1.0, 1.0, tau=2.0) == pytest.approx(-1.0)

    def test_survival(self):
        assert loglik_basic(make_cohort([(0, None)], 2.0), 0.5, 0.5, tau=1.0) == pytest.approx(-1.0)

    def test_event_in_zero_hazard_regime(self):
        assert loglik_basic(make_cohort([(0, 1)], 4.0), 0.0, 1.0, tau=2.0) == -math.inf

    def test_negative_hazard(self):
        with pytest.raises(ValueError):
            loglik_basic(make_cohort([(0, 1)], 4.0), -1.0, 1.0, tau=2.0)


class TestLLR:
    """Nested log-likelihood ratio."""

    def test_zero_when_fits_coincide(self):
        assert llr_basic(make_cohort([(0, 1), (2, 3)], 4.0), tau=2.0) == pytest.approx(0.0, abs=1e-12)

    def test_nonnegative(self, rng):
        for _ in range(1000):
            cohort = random_cohort(rng)
            assert llr_basic(cohort, float(rng.uniform(0.5, 9.5))) >= -1e-9

    def test_matches_grid_search(self, rng):
        """LLR equals the gap between the maximized likelihoods found numerically."""
        for _ in range(20):
            cohort = random_cohort(rng)
            tau = float(rng.uniform(1.0, 9.0))
            alt = fit_alt_basic(cohort, tau)
            null = fit_null_basic(cohort)
            grid = np.linspace(1e-4, 3.0, 3001)
            null_best = max(loglik_basic(cohort, r, r, tau) for r in grid)
            null_best = max(null_best, loglik_basic(cohort, null.lambda0, null.lambda0, tau))
            expected = alt.loglik - null_best
            assert llr_basic(cohort, tau) == pytest.approx(max(expected, 0.0), abs=1e-6)


class TestWilks:
    """Chi-squared(1) p-value of the deviance."""

    def test_zero(self):
        assert wilks_pvalue(0.0) == pytest.approx(1.0)

    def test_five_percent(self):
        assert wilks_pvalue(1.92073) == pytest.approx(0.05, rel=1e-3)

    def test_large(self):
        assert wilks_pvalue(10.0) < 1e-4

    def test_negative(self):
        with pytest.raises(ValueError):
            wilks_pvalue(-1.0)

    @pytest.mark.slow
    def test_null_calibration(self):
        """2 LLR of null cohorts follows chi-squared(1)."""
        rng = np.random.default_rng(5)
        statistics = []
        for _ in range(1000):
            start = rng.uniform(0, 360, size=500)
            action = start + rng.exponential(1 / 0.02, size=500)
            action[action > 360] = np.nan
            cohort = make_cohort(list(zip(start, [None if np.isnan(a) else a for a in action])), 360.0)
            statistics.append(2 * llr_basic(cohort, 180.0))
        assert stats.kstest(statistics, stats.chi2(df=1).cdf).pvalue > 0.01
