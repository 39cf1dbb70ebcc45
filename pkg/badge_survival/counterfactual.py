"""
Counterfactual Module - worlds without the badge

Two community-level analyses:

- tag wikis: replay wiki creation with the post-badge hazard of every
  popularity bucket forced to its pre-badge estimate, and compare the
  cumulative number of wikis (and the popularity rank of the tags that got
  them) with the true world;
- bounties: per-stratum two-regime fits of the time to bounty (asker vs other
  offerer) and the time to first answer (no bounty, asker, other), plus the
  extra answers a bounty brings for questions with the same early answers.
"""

import logging
import math
import warnings
from dataclasses import dataclass, replace
from typing import Dict, Hashable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from .cohort_tools import POPULARITY_EDGES, moods_median_test, popularity_buckets
from .errors import BadgeSurvivalError, DataError
from .events import CENSORED, ActionTime, Cohort, EventRecord, validate_records
from .survival_basic import fit_alt_basic

logger = logging.getLogger(__name__)

BOUNTY_DELAY_DAYS = 2.0
BOUNTY_DAY_LENGTH = 1.0
MAX_EARLY_ANSWERS = 5
NO_BOUNTY, ASKER, OTHER = -1, 0, 1
BOUNTY_STRATA = (ASKER, OTHER)
ANSWER_STRATA = (NO_BOUNTY, ASKER, OTHER)


@dataclass(frozen=True)
class TagEntity:
    """A tag, its popularity, first use and (possibly censored) wiki creation"""
    tag_id: Hashable
    popularity: float
    first_use: float
    wiki_time: ActionTime = CENSORED
    bucket: Optional[str] = None

    def __post_init__(self):
        if self.wiki_time is not CENSORED and self.wiki_time < self.first_use:
            raise DataError(f"tag {self.tag_id!r}: wiki created before first use")


@dataclass(frozen=True)
class Question:
    """
    A question with its optional bounty and first answer

    early_answers counts the answers of the first two days after asking,
    later_answers those that arrived afterwards.
    """
    question_id: Hashable
    ask_time: float
    bounty_time: ActionTime = CENSORED
    offerer: Optional[int] = None
    first_answer_time: ActionTime = CENSORED
    answers_before_bounty: Optional[int] = None
    early_answers: Optional[int] = None
    later_answers: Optional[int] = None

    @property
    def stratum(self) -> int:
        return NO_BOUNTY if self.bounty_time is CENSORED else int(self.offerer)


@dataclass(frozen=True)
class BountyStratumFit:
    """Pre/post hazards of one stratum"""
    stratum: int
    lambda0: float
    lambda1: float
    n_events_pre: int
    n_events_post: int
    exposure_pre: float
    exposure_post: float
    n_units: int
    flag: str = ""


@dataclass(frozen=True)
class BountyModelFit:
    """Time-to-bounty (four hazards) and time-to-first-answer (six hazards)"""
    time_to_bounty: Tuple[BountyStratumFit, ...]
    time_to_answer: Tuple[BountyStratumFit, ...]
    rejected: Dict[str, int]

    def to_frame(self) -> pd.DataFrame:
        rows = []
        for family, fits in (("time_to_bounty", self.time_to_bounty), ("time_to_answer", self.time_to_answer)):
            for f in fits:
                rows.append((family, f.stratum, f.lambda0, f.lambda1, f.n_events_pre, f.n_events_post,
                             f.exposure_pre, f.exposure_post, f.n_units, f.flag))
        return pd.DataFrame(rows, columns=["family", "stratum", "lambda0", "lambda1", "n_events_pre",
                                           "n_events_post", "exposure_pre", "exposure_post", "n_units", "flag"])


@dataclass(frozen=True)
class CounterfactualSeries:
    """Cumulative wiki counts over a time grid, summarized across replicates"""
    grid: np.ndarray
    mean: np.ndarray
    lo95: np.ndarray
    hi95: np.ndarray
    scenario: str
    rank_mean: np.ndarray
    n_replicates: int = 1
    opened: Optional[np.ndarray] = None

    @property
    def open_count(self) -> np.ndarray:
        """Tags already in use but still without a wiki"""
        if self.opened is None:
            return np.full(len(self.grid), np.nan)
        return self.opened - self.mean

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "time": self.grid,
            "mean": self.mean,
            "lo95": self.lo95,
            "hi95": self.hi95,
            "open_tags": self.open_count,
            "scenario": self.scenario,
        })


@dataclass(frozen=True)
class WorldComparison:
    """True world against the counterfactual band"""
    frame: pd.DataFrame
    exits_band: bool
    first_exit_time: float
    exit_direction: str


def popularity_ranks(tags: Sequence[TagEntity]) -> Dict[Hashable, int]:
    """Rank 1 is the most popular tag; ties share the lowest rank"""
    popularity = pd.Series([t.popularity for t in tags], index=[t.tag_id for t in tags], dtype=float)
    return {tag: int(rank) for tag, rank in popularity.rank(method="min", ascending=False).items()}


def assign_buckets(tags: Sequence[TagEntity], edges: Sequence[float] = POPULARITY_EDGES) -> List[TagEntity]:
    """Copies of the tags labelled with their popularity bucket"""
    popularity = pd.Series([t.popularity for t in tags], dtype=float)
    labels = popularity_buckets(popularity, edges)
    return [replace(t, bucket=label) for t, label in zip(tags, labels)]


def tag_cohorts(tags: Sequence[TagEntity], horizon: float) -> Dict[str, Cohort]:
    """
    One cohort per bucket: a tag starts at its first use and acts when its wiki appears
    """
    by_bucket: Dict[str, List[EventRecord]] = {}
    for t in tags:
        if t.bucket is None:
            raise DataError(f"tag {t.tag_id!r} has no popularity bucket")
        by_bucket.setdefault(t.bucket, []).append(EventRecord(t.tag_id, t.first_use, t.wiki_time))
    return {bucket: validate_records(records, horizon).cohort for bucket, records in by_bucket.items()}


def _cumulative(times: np.ndarray, ranks: np.ndarray, grid: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Count and mean rank of the entities created by each grid time"""
    order = np.argsort(times, kind="mergesort")
    sorted_times = times[order]
    cum_rank = np.concatenate([[0.0], np.cumsum(ranks[order])])
    counts = np.searchsorted(sorted_times, grid, side="right")
    with np.errstate(invalid="ignore", divide="ignore"):
        rank_mean = np.where(counts > 0, cum_rank[counts] / counts, np.nan)
    return counts.astype(float), rank_mean


def _creation_times(tags: Sequence[TagEntity]) -> np.ndarray:
    return np.array([math.inf if t.wiki_time is CENSORED else t.wiki_time for t in tags], dtype=float)

def _opened(tags: Sequence[TagEntity], grid: np.ndarray) -> np.ndarray:
    first_use = np.sort(np.array([t.first_use for t in tags], dtype=float))
    return np.searchsorted(first_use, grid, side="right").astype(float)



def _default_grid(horizon: float, grid: Optional[Sequence[float]]) -> np.ndarray:
    if grid is None:
        return np.linspace(0.0, horizon, 101)
    grid = np.asarray(grid, dtype=float)
    if np.any(np.diff(grid) < 0):
        raise ValueError("time grid must be nondecreasing")
    return grid


def observed_series(
    tags: Sequence[TagEntity],
    grid: Sequence[float],
    ranks: Optional[Mapping[Hashable, int]] = None,
    scenario: str = "true_world",
) -> CounterfactualSeries:
    """Cumulative counts of the wikis actually created, as a collapsed-band series"""
    grid = np.asarray(grid, dtype=float)
    ranks = ranks if ranks is not None else popularity_ranks(tags)
    rank_values = np.array([ranks[t.tag_id] for t in tags], dtype=float)
    counts, rank_mean = _cumulative(_creation_times(tags), rank_values, grid)
    return CounterfactualSeries(grid, counts, counts.copy(), counts.copy(), scenario, rank_mean, 1, _opened(tags, grid))


def _simulate_replicate(
    origins: np.ndarray,
    hazards: np.ndarray,
    fixed_times: np.ndarray,
    pending: np.ndarray,
    ranks: np.ndarray,
    horizon: float,
    grid: np.ndarray,
    seed: int,
    index: int,
) -> Tuple[np.ndarray, np.ndarray]:
    rng = np.random.default_rng([seed, index])
    times = fixed_times.copy()
    draws = np.full(len(origins), math.inf)
    positive = pending & (hazards > 0)
    draws[positive] = origins[positive] + rng.exponential(1.0 / hazards[positive])
    draws[draws > horizon] = math.inf
    times[pending] = draws[pending]
    return _cumulative(times, ranks, grid)


def simulate_counterfactual_wikis(
    tags: Sequence[TagEntity],
    grouped_lambda0: Mapping[str, float],
    horizon: float,
    n_replicates: int,
    seed: int = 0,
    start: float = 0.0,
    grid: Optional[Sequence[float]] = None,
    n_jobs: int = 1,
) -> CounterfactualSeries:
    """
    Replay wiki creation without the badge

    Tags that already have a wiki at `start` keep it. Every other tag draws
    its creation time from Exponential(lambda0 of its bucket) started at
    max(first use, start), censored at the horizon.

    Args:
        tags: tags with their bucket label set
        grouped_lambda0: pre-badge hazard per bucket
        horizon: end of the simulation
        n_replicates: number of simulated worlds
        seed: replicate i uses substream (seed, i)
        start: simulation start, usually the badge time
        grid: output time grid, 101 points over [0, horizon] by default
        n_jobs: joblib workers over replicates

    Returns:
        CounterfactualSeries with scenario "counterfactual"
    """
    if n_replicates < 1:
        raise ValueError(f"n_replicates must be >= 1, got {n_replicates}")
    missing = sorted({str(t.bucket) for t in tags if t.bucket not in grouped_lambda0})
    if missing:
        raise DataError(f"no fitted pre-badge hazard for bucket(s): {', '.join(missing)}")
    if any(rate < 0 for rate in grouped_lambda0.values()):
        raise ValueError("hazards must be nonnegative")

    grid = _default_grid(horizon, grid)
    ranks = popularity_ranks(tags)
    rank_values = np.array([ranks[t.tag_id] for t in tags], dtype=float)
    first_use = np.array([t.first_use for t in tags], dtype=float)
    hazards = np.array([grouped_lambda0[t.bucket] for t in tags], dtype=float)
    created = _creation_times(tags)
    pending = (created >= start) & (first_use <= horizon)
    fixed_times = np.where(pending, math.inf, created)
    origins = np.maximum(first_use, start)

    results = Parallel(n_jobs=n_jobs)(
        delayed(_simulate_replicate)(origins, hazards, fixed_times, pending, rank_values, horizon, grid, seed, i)
        for i in range(n_replicates)
    )
    paths = np.vstack([counts for counts, _ in results])
    rank_paths = np.vstack([rank_mean for _, rank_mean in results])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", category=RuntimeWarning)
        rank_mean = np.nanmean(rank_paths, axis=0)
    lo95, hi95 = np.percentile(paths, [2.5, 97.5], axis=0)
    return CounterfactualSeries(
        grid, paths.mean(axis=0), lo95, hi95, "counterfactual", rank_mean, n_replicates, _opened(tags, grid)
    )


def compare_worlds(
    true_world: Union[Sequence[TagEntity], CounterfactualSeries],
    counterfactual: CounterfactualSeries,
    popularity_ranks: Optional[Mapping[Hashable, int]] = None,
) -> WorldComparison:
    """
    Difference between true and counterfactual cumulative counts

    Larger mean rank means the wikis went to less popular tags. open_tags
    counts tags in use without a wiki in each world.

    Raises:
        DataError: when a true-world series lives on a different grid
    """
    if isinstance(true_world, CounterfactualSeries):
        if true_world.grid.shape != counterfactual.grid.shape or not np.allclose(true_world.grid, counterfactual.grid):
            raise DataError("true-world and counterfactual series use different time grids")
        observed = true_world
    else:
        observed = observed_series(true_world, counterfactual.grid, popularity_ranks)

    true_count = observed.mean
    above = true_count > counterfactual.hi95
    below = true_count < counterfactual.lo95
    outside = above | below
    frame = pd.DataFrame({
        "time": counterfactual.grid,
        "true_count": true_count,
        "cf_mean": counterfactual.mean,
        "cf_lo95": counterfactual.lo95,
        "cf_hi95": counterfactual.hi95,
        "difference": true_count - counterfactual.mean,
        "outside_band": outside,
        "true_rank_mean": observed.rank_mean,
        "cf_rank_mean": counterfactual.rank_mean,
        "open_tags": observed.open_count,
        "cf_open_tags": counterfactual.open_count,
    })
    if not outside.any():
        return WorldComparison(frame, False, math.nan, "")
    first = int(np.argmax(outside))
    return WorldComparison(frame, True, float(counterfactual.grid[first]), "above" if above[first] else "below")


def _validate_question(q: Question) -> Optional[str]:
    if q.bounty_time is not CENSORED:
        if q.offerer not in BOUNTY_STRATA:
            return "unknown_offerer"
        if q.bounty_time < q.ask_time + BOUNTY_DELAY_DAYS:
            return "bounty_before_eligible"
    if q.first_answer_time is not CENSORED and q.first_answer_time < q.ask_time:
        return "answer_before_ask"
    return None


def _fit_stratum(stratum: int, records: List[EventRecord], tau: float, horizon: float) -> BountyStratumFit:
    if not records:
        logger.warning("stratum %d is empty; hazards set to 0", stratum)
        return BountyStratumFit(stratum, 0.0, 0.0, 0, 0, 0.0, 0.0, 0, flag="empty stratum")
    try:
        cohort = validate_records(records, horizon).cohort
        fit = fit_alt_basic(cohort, tau)
    except BadgeSurvivalError as exc:
        logger.warning("stratum %d cannot be fitted: %s", stratum, exc)
        return BountyStratumFit(stratum, 0.0, 0.0, 0, 0, 0.0, 0.0, len(records), flag=str(exc))
    return BountyStratumFit(
        stratum, fit.lambda0, fit.lambda1, fit.n_events_pre, fit.n_events_post,
        fit.exposure_pre, fit.exposure_post, len(cohort), flag="; ".join(fit.warnings),
    )


def fit_bounty_model(questions: Sequence[Question], tau: float, horizon: float) -> BountyModelFit:
    """
    Per-stratum two-regime fits of time to bounty and time to first answer

    The bounty clock of a question starts two days after it was asked; the
    answer clock starts when it was asked.

    Args:
        questions: questions with bounty and answer times
        tau: badge introduction time
        horizon: observation horizon

    Returns:
        BountyModelFit with 2 time-to-bounty and 3 time-to-answer strata
    """
    rejected: Dict[str, int] = {}
    valid = []
    for q in questions:
        reason = _validate_question(q)
        if reason is None:
            valid.append(q)
        else:
            rejected[reason] = rejected.get(reason, 0) + 1
    if rejected:
        logger.warning("rejected questions: %s", rejected)

    bounty = {b: [] for b in BOUNTY_STRATA}
    answer = {b: [] for b in ANSWER_STRATA}
    for q in valid:
        if q.stratum != NO_BOUNTY:
            bounty[q.stratum].append(EventRecord(q.question_id, q.ask_time + BOUNTY_DELAY_DAYS, q.bounty_time))
        answer[q.stratum].append(EventRecord(q.question_id, q.ask_time, q.first_answer_time))

    return BountyModelFit(
        time_to_bounty=tuple(_fit_stratum(b, bounty[b], tau, horizon) for b in BOUNTY_STRATA),
        time_to_answer=tuple(_fit_stratum(b, answer[b], tau, horizon) for b in ANSWER_STRATA),
        rejected=dict(sorted(rejected.items())),
    )


def counterfactual_waiting_times(fit: BountyModelFit) -> pd.DataFrame:
    """Expected waiting time per stratum with the badge (1/lambda1) and without it (1/lambda0)"""
    def mean_time(rate: float) -> float:
        return 1.0 / rate if rate > 0 else math.inf

    rows = []
    for family, fits in (("time_to_bounty", fit.time_to_bounty), ("time_to_answer", fit.time_to_answer)):
        for f in fits:
            with_badge, without_badge = mean_time(f.lambda1), mean_time(f.lambda0)
            change = with_badge / without_badge - 1.0 if math.isfinite(with_badge) and math.isfinite(without_badge) else math.nan
            rows.append((family, f.stratum, with_badge, without_badge, change))
    return pd.DataFrame(rows, columns=["family", "stratum", "with_badge_days", "without_badge_days", "relative_change"])


def answers_before_bounty_test(questions: Sequence[Question], tau: float, stratum: int) -> Tuple[float, float]:
    """
    Mood's median test on the answers a question had when the bounty was offered,
    bounties offered before tau against bounties offered after it
    """
    before, after = [], []
    for q in questions:
        if _validate_question(q) or q.stratum != stratum or q.answers_before_bounty is None:
            continue
        (before if q.bounty_time < tau else after).append(q.answers_before_bounty)
    return moods_median_test(before, after)


def _early_bucket(early: int, max_answers: int) -> str:
    return f"{max_answers}+" if early >= max_answers else str(early)


def answer_uplift(
    questions: Sequence[Question],
    max_answers: int = MAX_EARLY_ANSWERS,
    stratum: Optional[int] = None,
) -> pd.DataFrame:
    """
    Additional answers with and without a bounty, by answers in the first two days

    A question counts as bountied when its bounty came on the first day it
    was allowed; questions bountied later are left out. Each bucket of early
    answer counts gets Mood's median test on the later answers of the two
    arms.

    Args:
        questions: questions with early_answers and later_answers set;
            others are skipped
        max_answers: early counts at or above this share the last bucket
        stratum: restrict the bountied arm to ASKER or OTHER offerers

    Returns:
        One row per bucket: early_answers, n_bounty, n_plain, the median and
        mean later answers of each arm, chi2, p and a flag when the test
        could not run
    """
    if max_answers < 1:
        raise ValueError(f"max_answers must be >= 1, got {max_answers}")
    arms: Dict[str, Dict[str, List[int]]] = {}
    skipped = 0
    for q in questions:
        if q.early_answers is None or q.later_answers is None or _validate_question(q):
            skipped += 1
            continue
        if q.stratum == NO_BOUNTY:
            arm = "plain"
        elif q.bounty_time < q.ask_time + BOUNTY_DELAY_DAYS + BOUNTY_DAY_LENGTH and stratum in (None, q.stratum):
            arm = "bounty"
        else:
            skipped += 1
            continue
        bucket = _early_bucket(q.early_answers, max_answers)
        arms.setdefault(bucket, {"bounty": [], "plain": []})[arm].append(q.later_answers)
    if skipped:
        logger.debug("answer uplift: %d question(s) skipped", skipped)

    rows = []
    order = [str(n) for n in range(max_answers)] + [f"{max_answers}+"]
    for bucket in (b for b in order if b in arms):
        bounty, plain = arms[bucket]["bounty"], arms[bucket]["plain"]
        chi2, p, flag = math.nan, math.nan, ""
        if not bounty or not plain:
            flag = "empty arm"
        else:
            try:
                chi2, p = moods_median_test(bounty, plain)
            except DataError as exc:
                flag = str(exc)
        rows.append((
            bucket, len(bounty), len(plain),
            float(np.median(bounty)) if bounty else math.nan,
            float(np.median(plain)) if plain else math.nan,
            float(np.mean(bounty)) if bounty else math.nan,
            float(np.mean(plain)) if plain else math.nan,
            chi2, p, flag,
        ))
    return pd.DataFrame(rows, columns=[
        "early_answers", "n_bounty", "n_plain", "median_bounty", "median_plain",
        "mean_bounty", "mean_plain", "chi2", "p", "flag",
    ])
