"""
Bootstrap Difference-in-Differences Module

The treatment group holds the users who became eligible within w/2 of the
true badge. Each control group holds the users eligible within w/2 of a
virtual badge placed away from the true one. The treatment LLR is compared
with the empirical distribution of the control LLRs: the p-value is the
add-one smoothed share of control LLRs at least as large as the treatment LLR.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from .errors import BadgeSurvivalError, DataError, FitError
from .events import Cohort, FollowUp, ModelKind, Placement, StudyConfig, virtual_badge_ranges
from .survival_basic import llr_basic
from .survival_robust import llr_robust, select_rate_cv

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class VirtualBadgeSchedule:
    """Virtual badge times used to build the control groups"""
    times: Tuple[float, ...]
    placement_mode: Placement
    seed: Optional[int] = None


@dataclass(frozen=True)
class Ecdf:
    """Right-continuous empirical CDF of a sample"""
    values: np.ndarray

    @classmethod
    def from_sample(cls, sample: Sequence[float]) -> "Ecdf":
        return cls(np.sort(np.asarray(sample, dtype=float)))

    def __call__(self, x):
        if len(self.values) == 0:
            raise ValueError("ECDF of an empty sample")
        return np.searchsorted(self.values, x, side="right") / len(self.values)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"llr": self.values, "ecdf": self(self.values)})


@dataclass(frozen=True)
class BootstrapResult:
    """Outcome of one bootstrap difference-in-differences test"""
    llr_treatment: float
    llr_controls: Tuple[float, ...]
    ecdf: Ecdf
    p_value: float
    model: ModelKind
    n_controls_used: int
    n_controls_dropped: int = 0
    control_times: Tuple[float, ...] = ()
    control_sizes: Tuple[int, ...] = ()
    treatment_size: int = 0
    rate: Optional[float] = None
    schedule: Optional[VirtualBadgeSchedule] = field(default=None, repr=False)

    def to_frame(self) -> pd.DataFrame:
        """Control LLR samples with their ECDF values, sorted"""
        return self.ecdf.to_frame()

    def summary(self) -> dict:
        return {
            "model": self.model.value,
            "llr_treatment": self.llr_treatment,
            "p_value": self.p_value,
            "n_controls_used": self.n_controls_used,
            "n_controls_dropped": self.n_controls_dropped,
            "treatment_size": self.treatment_size,
            "rate": self.rate,
        }


def treatment_group(cohort: Cohort, tau: float, w: float) -> Cohort:
    """
    Users eligible within [tau - w/2, tau + w/2]

    Raises:
        DataError: when nobody starts inside the window
    """
    if w < 0:
        raise ValueError(f"window must be >= 0, got {w}")
    group = cohort.window(tau, w)
    if len(group) == 0:
        raise DataError(
            f"empty group: no user starts within [{tau - w / 2:g}, {tau + w / 2:g}]; "
            f"the window is too narrow for this data"
        )
    return group


def place_virtual_badges(
    horizon: float,
    tau: float,
    w: float,
    n_controls: int,
    mode: Placement = Placement.UNIFORM_RANDOM,
    seed: int = 0,
    stride: Optional[float] = None,
) -> VirtualBadgeSchedule:
    """
    Place virtual badges inside [w/2, tau - w] U [tau + w, T - w/2]

    Args:
        horizon: observation horizon T
        tau: true badge time
        w: group window width
        n_controls: number of uniform draws (ignored by sliding_window)
        mode: uniform_random or sliding_window
        seed: master seed; draw i uses its own spawned substream
        stride: sliding step, defaults to w / 4

    Returns:
        VirtualBadgeSchedule
    """
    mode = Placement(mode)
    ranges = virtual_badge_ranges(horizon, tau, w)
    if not ranges:
        raise DataError(f"no room for virtual badges (tau={tau}, T={horizon}, w={w})")

    if mode is Placement.SLIDING_WINDOW:
        step = stride if stride is not None else w / 4.0
        if not step > 0:
            raise ValueError("sliding_window placement needs a positive stride")
        times: List[float] = []
        for lo, hi in ranges:
            count = int(math.floor((hi - lo) / step + 1e-9)) + 1
            times.extend(lo + step * np.arange(count))
        return VirtualBadgeSchedule(tuple(float(t) for t in times), mode, seed)

    if n_controls < 0:
        raise ValueError(f"n_controls must be >= 0, got {n_controls}")
    lengths = np.array([hi - lo for lo, hi in ranges])
    weights = lengths / lengths.sum() if lengths.sum() > 0 else np.full(len(ranges), 1.0 / len(ranges))
    children = np.random.SeedSequence(seed).spawn(n_controls)
    times = []
    for child in children:
        rng = np.random.default_rng(child)
        lo, hi = ranges[rng.choice(len(ranges), p=weights)]
        times.append(float(rng.uniform(lo, hi)) if hi > lo else float(lo))
    return VirtualBadgeSchedule(tuple(times), mode, seed)


def empirical_pvalue(llr_treatment: float, llr_controls: Sequence[float]) -> float:
    """(1 + #{control LLR >= treatment LLR}) / (n + 1)"""
    controls = np.asarray(llr_controls, dtype=float)
    exceed = int(np.count_nonzero(controls >= llr_treatment))
    return (1 + exceed) / (len(controls) + 1)


def group_llr(cohort: Cohort, tau: float, model: ModelKind, rate: Optional[float] = None) -> float:
    """LLR of one group under the chosen model"""
    if ModelKind(model) is ModelKind.ROBUST:
        if rate is None:
            raise ValueError("the robust model needs a rate")
        return llr_robust(cohort, tau, rate)
    return llr_basic(cohort, tau)


def resolve_rate(cohort: Cohort, config: StudyConfig) -> Optional[float]:
    """Rate used by every group of a test: the fixed rate or the CV choice on the whole cohort"""
    if config.model is not ModelKind.ROBUST:
        return None
    if config.rate_is_fixed:
        return config.rate_grid[0]
    rate = select_rate_cv(cohort, config.tau, config.rate_grid, config.folds, config.seed)
    logger.info("cross-validation chose rate r=%g from %s", rate, list(config.rate_grid))
    return rate


def study_group(cohort: Cohort, tau: float, config: StudyConfig) -> Cohort:
    """Treatment or control group around tau, cut at the end of its window under follow_up=window"""
    group = treatment_group(cohort, tau, config.window)
    if config.follow_up is FollowUp.WINDOW:
        group = group.truncate(min(tau + config.window / 2.0, cohort.horizon))
    return group


def _control_llr(cohort: Cohort, tau_i: float, config: StudyConfig, rate: Optional[float]):
    try:
        group = study_group(cohort, tau_i, config)
        return tau_i, len(group), group_llr(group, tau_i, config.model, rate), None
    except BadgeSurvivalError as exc:
        return tau_i, 0, math.nan, str(exc)


def bootstrap_test(
    cohort: Cohort,
    config: StudyConfig,
    schedule: Optional[VirtualBadgeSchedule] = None,
) -> BootstrapResult:
    """
    Run the bootstrap difference-in-differences test

    Args:
        cohort: validated users
        config: study configuration
        schedule: virtual badges to use; placed from the config when omitted

    Returns:
        BootstrapResult

    Raises:
        FitError: when fewer than config.min_controls control groups can be fitted
    """
    rate = resolve_rate(cohort, config)
    treatment = study_group(cohort, config.tau, config)
    llr_treatment = group_llr(treatment, config.tau, config.model, rate)

    if schedule is None:
        schedule = place_virtual_badges(
            config.horizon, config.tau, config.window, config.n_controls,
            config.placement, config.seed, config.stride,
        )
    outcomes = Parallel(n_jobs=config.n_jobs)(
        delayed(_control_llr)(cohort, tau_i, config, rate) for tau_i in schedule.times
    )
    outcomes = sorted(outcomes, key=lambda item: item[0])

    used = [(t, n, llr) for t, n, llr, err in outcomes if err is None]
    dropped = [(t, err) for t, _, _, err in outcomes if err is not None]
    if dropped:
        logger.warning("dropped %d of %d control group(s); first: tau=%g: %s",
                       len(dropped), len(outcomes), dropped[0][0], dropped[0][1])
    if len(used) < config.min_controls:
        raise FitError(
            f"only {len(used)} usable control group(s), need at least {config.min_controls}"
        )

    llr_controls = tuple(llr for _, _, llr in used)
    return BootstrapResult(
        llr_treatment=llr_treatment,
        llr_controls=llr_controls,
        ecdf=Ecdf.from_sample(llr_controls),
        p_value=empirical_pvalue(llr_treatment, llr_controls),
        model=config.model,
        n_controls_used=len(used),
        n_controls_dropped=len(dropped),
        control_times=tuple(t for t, _, _ in used),
        control_sizes=tuple(n for _, n, _ in used),
        treatment_size=len(treatment),
        rate=rate,
        schedule=schedule,
    )


def llr_series(cohort: Cohort, config: StudyConfig) -> pd.DataFrame:
    """
    LLR against virtual badge time on the sliding-window schedule, plus the true badge

    Returns:
        DataFrame with columns tau, llr, role ("control" | "treatment"), n_users;
        groups that cannot be fitted have NaN llr
    """
    rate = resolve_rate(cohort, config)
    schedule = place_virtual_badges(
        config.horizon, config.tau, config.window, 0,
        Placement.SLIDING_WINDOW, config.seed, config.effective_stride,
    )
    rows = Parallel(n_jobs=config.n_jobs)(
        delayed(_control_llr)(cohort, tau_i, config, rate) for tau_i in schedule.times
    )
    frame = pd.DataFrame(
        [(t, llr, "control", n) for t, n, llr, _ in rows], columns=["tau", "llr", "role", "n_users"]
    )
    t, n, llr, err = _control_llr(cohort, config.tau, config, rate)
    if err is not None:
        logger.warning("treatment group at tau=%g cannot be fitted: %s", t, err)
    frame.loc[len(frame)] = [t, llr, "treatment", n]
    return frame.sort_values("tau", kind="mergesort").reset_index(drop=True)
