"""
Robust Survival Module - Gamma-heterogeneous hazards

Each user draws a private hazard lambda0(u) ~ Gamma(k0, r) before the badge
and an independent lambda1(u) ~ Gamma(k1, r) after it. Integrating the hazards
out turns every exposure segment into a Lomax waiting time with survival
(r / (r + d)) ** k, so the shape MLEs are closed form for a given rate r.
The rate itself is chosen by cross-validation over a grid.
"""

import logging
import math
from dataclasses import dataclass
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from .errors import FitError
from .events import Cohort, cohort_segments
from .survival_basic import LLR_TOLERANCE

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RobustFit:
    """Shape/rate estimates of the Gamma-heterogeneous model"""
    k0: float
    k1: float
    r: float
    loglik: float
    n_events_pre: int = 0
    n_events_post: int = 0
    warnings: Tuple[str, ...] = ()

    @property
    def mean_intensity_pre(self) -> float:
        return self.k0 / self.r

    @property
    def mean_intensity_post(self) -> float:
        return self.k1 / self.r


def _log_survival(durations: np.ndarray, r: float) -> np.ndarray:
    """log(r / (r + d)), computed without cancellation for small d"""
    return -np.log1p(np.asarray(durations, dtype=float) / r)


def marginal_segment_loglik(duration: float, event: bool, k: float, r: float) -> float:
    """
    Lomax log-likelihood of one exposure segment

    Args:
        duration: segment length d >= 0
        event: whether the segment ends with the action
        k: Gamma shape >= 0
        r: Gamma rate > 0

    Returns:
        k * log(r/(r+d)), plus log(k/(r+d)) for an event; -inf for an event when k == 0
    """
    if r <= 0:
        raise ValueError(f"rate must be positive, got {r}")
    log_surv = float(k * _log_survival(duration, r)) if k > 0 else 0.0
    if not event:
        return log_surv
    if k <= 0:
        return -math.inf
    return math.log(k / (r + duration)) + log_surv


def _segments_loglik(durations: np.ndarray, events: np.ndarray, k: float, r: float) -> float:
    n_events = int(np.count_nonzero(events))
    if n_events and k <= 0:
        return -math.inf
    total = float(k * np.sum(_log_survival(durations, r))) if k > 0 else 0.0
    if n_events:
        total += float(np.sum(np.log(k / (r + durations[events]))))
    return total


def _shape_mle(n_events: int, log_surv_sum: float, regime: str, warnings: list) -> float:
    if n_events == 0:
        warnings.append(f"no events in {regime} regime; shape set to 0")
        return 0.0
    if log_surv_sum >= 0:
        raise FitError(f"{n_events} event(s) in {regime} regime with zero exposure")
    return -n_events / log_surv_sum


def loglik_robust(cohort: Cohort, k0: float, k1: float, r: float, tau: Optional[float] = None) -> float:
    """
    Marginal log-likelihood of the cohort

    With tau, each user's pre- and post-badge segments are scored
    independently under k0 and k1. Without tau the whole timeline
    [s, min(t, T)] is one segment under k0 (single-draw null model).
    """
    if tau is None:
        return _segments_loglik(cohort.end - cohort.start, cohort.observed, k0, r)
    seg = cohort_segments(cohort, tau)
    return _segments_loglik(seg.pre_duration, seg.event_pre, k0, r) + _segments_loglik(
        seg.post_duration, seg.event_post, k1, r
    )


def fit_null_robust(cohort: Cohort, r: float, tau: Optional[float] = None) -> RobustFit:
    """
    Fit one shape shared by both regimes

    Args:
        cohort: validated users
        r: Gamma rate
        tau: when given, both segments of every user are pooled so the null
            is nested in the factorized alternative; otherwise the whole
            timeline of each user is a single segment

    Returns:
        RobustFit with k0 == k1
    """
    if r <= 0:
        raise ValueError(f"rate must be positive, got {r}")
    if len(cohort) == 0:
        raise FitError("cannot fit an empty cohort")
    warnings: list = []
    if tau is None:
        durations = cohort.end - cohort.start
        if not np.any(durations > 0):
            raise FitError("all durations are zero: the cohort carries no information")
        n_events = int(np.count_nonzero(cohort.observed))
        log_sum = float(np.sum(_log_survival(durations, r)))
    else:
        seg = cohort_segments(cohort, tau)
        if not (np.any(seg.pre_duration > 0) or np.any(seg.post_duration > 0)):
            raise FitError("all durations are zero: the cohort carries no information")
        n_events = int(np.count_nonzero(seg.event_pre) + np.count_nonzero(seg.event_post))
        log_sum = float(np.sum(_log_survival(seg.pre_duration, r)) + np.sum(_log_survival(seg.post_duration, r)))

    k = _shape_mle(n_events, log_sum, "pooled", warnings)
    return RobustFit(
        k0=k,
        k1=k,
        r=float(r),
        loglik=loglik_robust(cohort, k, k, r, tau),
        n_events_pre=n_events,
        warnings=tuple(warnings),
    )


def fit_alt_robust(cohort: Cohort, tau: float, r: float) -> RobustFit:
    """Fit separate shapes before and after the badge"""
    if r <= 0:
        raise ValueError(f"rate must be positive, got {r}")
    if len(cohort) == 0:
        raise FitError("cannot fit an empty cohort")
    seg = cohort_segments(cohort, tau)
    if not (np.any(seg.pre_duration > 0) or np.any(seg.post_duration > 0)):
        raise FitError("zero exposure in both regimes")

    warnings: list = []
    n_pre = int(np.count_nonzero(seg.event_pre))
    n_post = int(np.count_nonzero(seg.event_post))
    k0 = _shape_mle(n_pre, float(np.sum(_log_survival(seg.pre_duration, r))), "pre-badge", warnings)
    k1 = _shape_mle(n_post, float(np.sum(_log_survival(seg.post_duration, r))), "post-badge", warnings)
    for message in warnings:
        logger.debug("fit_alt_robust: %s", message)

    return RobustFit(
        k0=k0,
        k1=k1,
        r=float(r),
        loglik=loglik_robust(cohort, k0, k1, r, tau),
        n_events_pre=n_pre,
        n_events_post=n_post,
        warnings=tuple(warnings),
    )


def llr_robust(cohort: Cohort, tau: float, r: float) -> float:
    """Log-likelihood ratio of the two-shape model against the pooled-shape model"""
    null = fit_null_robust(cohort, r, tau=tau)
    alt = fit_alt_robust(cohort, tau, r)
    llr = alt.loglik - null.loglik
    if llr < -LLR_TOLERANCE:
        raise FitError(f"negative log-likelihood ratio {llr:.3g}: nested fit failed")
    return max(llr, 0.0)


def select_rate_cv(
    cohort: Cohort,
    tau: float,
    grid: Sequence[float],
    folds: int = 5,
    seed: int = 0,
) -> float:
    """
    Choose the Gamma rate by k-fold cross-validation over users

    Each candidate r is scored by the mean held-out marginal log-likelihood of
    the alternative model. Folds whose held-out users have no exposure, or
    whose training part cannot be fitted, are skipped; rates are compared on
    the folds every remaining rate scored. Ties go to the smaller rate.

    Args:
        cohort: validated users
        tau: badge introduction time
        grid: candidate rates
        folds: number of folds, >= 2
        seed: fold assignment seed

    Returns:
        The chosen rate
    """
    candidates = sorted(float(r) for r in grid)
    if not candidates:
        raise ValueError("rate grid is empty")
    if any(r <= 0 for r in candidates):
        raise ValueError(f"rates must be positive, got {list(grid)}")
    if len(candidates) == 1:
        return candidates[0]
    if folds < 2:
        raise ValueError(f"folds must be >= 2, got {folds}")

    rng = np.random.default_rng(seed)
    assignment = rng.permutation(len(cohort)) % folds

    splits = []
    for fold in range(folds):
        held_out = assignment == fold
        train, test = cohort.select(~held_out), cohort.select(held_out)
        if len(train) == 0 or len(test) == 0 or float(np.sum(test.end - test.start)) <= 0:
            logger.debug("fold %d skipped: no held-out exposure", fold)
            continue
        splits.append((fold, train, test))

    scores: Dict[float, Dict[int, float]] = {}
    for r in candidates:
        per_fold = {}
        for fold, train, test in splits:
            try:
                fit = fit_alt_robust(train, tau, r)
            except FitError as exc:
                logger.debug("rate %g, fold %d skipped: %s", r, fold, exc)
                continue
            per_fold[fold] = loglik_robust(test, fit.k0, fit.k1, r, tau)
        if per_fold:
            scores[r] = per_fold

    if not scores:
        raise FitError("every cross-validation fold was skipped")
    common = sorted(set.intersection(*(set(s) for s in scores.values())))
    if not common:
        raise FitError("no cross-validation fold was scored by every rate")

    best_rate, best_score = None, -math.inf
    for r in candidates:
        if r not in scores:
            continue
        score = float(np.mean([scores[r][fold] for fold in common]))
        logger.debug("rate %g: mean held-out loglik %.6g over %d folds", r, score, len(common))
        if best_rate is None or score > best_score:
            best_rate, best_score = r, score
    return best_rate
