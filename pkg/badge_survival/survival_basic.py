"""
Basic Survival Module - shared piecewise-constant hazard model

Every eligible user acts with hazard lambda0 before the badge and lambda1
after it. Maximum likelihood estimates are closed form: events divided by
exposure, per regime.
"""

import logging
import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np
from scipy import special, stats

from .errors import FitError
from .events import Cohort, cohort_segments

logger = logging.getLogger(__name__)

LLR_TOLERANCE = 1e-9


@dataclass(frozen=True)
class BasicFit:
    """Per-day hazards of the basic model with their sufficient statistics"""
    lambda0: float
    lambda1: float
    loglik: float
    n_events_pre: int
    n_events_post: int
    exposure_pre: float
    exposure_post: float
    warnings: Tuple[str, ...] = ()

    @property
    def mean_time_change(self) -> float:
        """Relative change of the expected waiting time after the badge (-0.75 = 75% faster)"""
        if self.lambda0 > 0 and self.lambda1 > 0:
            return self.lambda0 / self.lambda1 - 1.0
        return math.nan


def _regime_rate(events: int, exposure: float, regime: str, warnings: list) -> float:
    if exposure > 0:
        if events == 0:
            warnings.append(f"no events in {regime} regime; hazard set to 0")
        return events / exposure
    if events > 0:
        raise FitError(f"{events} event(s) in {regime} regime with zero exposure")
    warnings.append(f"zero exposure in {regime} regime; hazard undefined, set to 0")
    return 0.0


def _regime_loglik(events: float, exposure: float, rate: float) -> float:
    # xlogy gives 0 * log 0 = 0 and n * log 0 = -inf
    return float(special.xlogy(events, rate) - rate * exposure)


def fit_null_basic(cohort: Cohort) -> BasicFit:
    """
    Fit a single hazard shared by both regimes

    Returns:
        BasicFit with lambda0 == lambda1
    """
    if len(cohort) == 0:
        raise FitError("cannot fit an empty cohort")
    events = int(np.count_nonzero(cohort.observed))
    exposure = float(np.sum(cohort.end - cohort.start))
    if exposure <= 0:
        raise FitError("zero total exposure: the cohort carries no information")

    rate = events / exposure
    warnings = () if events else ("no events; hazard set to 0",)
    return BasicFit(
        lambda0=rate,
        lambda1=rate,
        loglik=_regime_loglik(events, exposure, rate),
        n_events_pre=events,
        n_events_post=0,
        exposure_pre=exposure,
        exposure_post=0.0,
        warnings=warnings,
    )


def fit_alt_basic(cohort: Cohort, tau: float) -> BasicFit:
    """
    Fit separate hazards before and after the badge

    Args:
        cohort: validated users
        tau: badge introduction time, 0 < tau <= T

    Returns:
        BasicFit; a regime without events or exposure gets hazard 0 and a warning
    """
    if len(cohort) == 0:
        raise FitError("cannot fit an empty cohort")
    seg = cohort_segments(cohort, tau)
    n_pre = int(np.count_nonzero(seg.event_pre))
    n_post = int(np.count_nonzero(seg.event_post))
    exp_pre = float(np.sum(seg.pre_duration))
    exp_post = float(np.sum(seg.post_duration))
    if exp_pre <= 0 and exp_post <= 0:
        raise FitError("zero exposure in both regimes")

    warnings: list = []
    lambda0 = _regime_rate(n_pre, exp_pre, "pre-badge", warnings)
    lambda1 = _regime_rate(n_post, exp_post, "post-badge", warnings)
    for message in warnings:
        logger.debug("fit_alt_basic: %s", message)

    return BasicFit(
        lambda0=lambda0,
        lambda1=lambda1,
        loglik=_regime_loglik(n_pre, exp_pre, lambda0) + _regime_loglik(n_post, exp_post, lambda1),
        n_events_pre=n_pre,
        n_events_post=n_post,
        exposure_pre=exp_pre,
        exposure_post=exp_post,
        warnings=tuple(warnings),
    )


def loglik_basic(cohort: Cohort, lambda0: float, lambda1: float, tau: float) -> float:
    """
    Log-likelihood of the cohort under the piecewise-exponential model

    Observed actions contribute log f = log lambda(t) - integral of lambda,
    censored users contribute log S = -integral of lambda up to T. An event
    in a zero-hazard regime makes the result -inf.
    """
    if lambda0 < 0 or lambda1 < 0:
        raise ValueError("hazards must be nonnegative")
    seg = cohort_segments(cohort, tau)
    return _regime_loglik(
        float(np.count_nonzero(seg.event_pre)), float(np.sum(seg.pre_duration)), lambda0
    ) + _regime_loglik(
        float(np.count_nonzero(seg.event_post)), float(np.sum(seg.post_duration)), lambda1
    )


def llr_basic(cohort: Cohort, tau: float) -> float:
    """Log-likelihood ratio of the two-hazard model against the shared-hazard model"""
    null = fit_null_basic(cohort)
    alt = fit_alt_basic(cohort, tau)
    llr = loglik_basic(cohort, alt.lambda0, alt.lambda1, tau) - loglik_basic(
        cohort, null.lambda0, null.lambda1, tau
    )
    if llr < -LLR_TOLERANCE:
        raise FitError(f"negative log-likelihood ratio {llr:.3g}: nested fit failed")
    return max(llr, 0.0)


def wilks_pvalue(llr: float) -> float:
    """Chi-squared(1) tail probability of the deviance 2 * llr"""
    if llr < -LLR_TOLERANCE or math.isnan(llr):
        raise ValueError(f"log-likelihood ratio must be >= 0, got {llr}")
    return float(stats.chi2.sf(2.0 * max(llr, 0.0), df=1))
