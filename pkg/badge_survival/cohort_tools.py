"""
Cohort Tools Module - balance checks, grouped fits, median tests and intensity series
"""

import logging
import math
from dataclasses import dataclass
from typing import Hashable, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy import stats

from .bootstrap_did import VirtualBadgeSchedule
from .errors import BadgeSurvivalError, DataError
from .events import Cohort, ModelKind
from .survival_basic import fit_alt_basic, fit_null_basic
from .survival_robust import fit_alt_robust, fit_null_robust

logger = logging.getLogger(__name__)

BALANCE_THRESHOLD = 0.25
POPULARITY_EDGES = (0.01, 0.10, 0.50)


@dataclass(frozen=True)
class BalanceRow:
    """|SMD| of one covariate between the treatment group and the control groups"""
    covariate: str
    mean_smd: float
    sd_smd: float
    balanced: bool
    n_controls: int
    flag: str = ""


@dataclass(frozen=True)
class GroupedFit:
    """Two-regime fit of one group (e.g. a popularity bucket)"""
    group: Hashable
    lambda0_hat: float
    lambda1_hat: float
    n_events_pre: int
    n_events_post: int
    exposure_pre: float
    exposure_post: float
    n_units: int
    model: ModelKind = ModelKind.BASIC
    k0: Optional[float] = None
    k1: Optional[float] = None
    flag: str = ""


@dataclass(frozen=True)
class IntensitySeries:
    """Single-regime estimates over a sliding window of user start times"""
    centers: np.ndarray
    estimates: np.ndarray
    regimes: Tuple[str, ...]
    n_users: np.ndarray
    window: float
    model: ModelKind
    flags: Tuple[str, ...] = ()

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "center": self.centers,
            "estimate": self.estimates,
            "regime": list(self.regimes),
            "n_users": self.n_users,
            "flag": list(self.flags) if self.flags else [""] * len(self.centers),
        })


def smd(treatment_values: Sequence[float], control_values: Sequence[float]) -> float:
    """
    Absolute standardized mean difference

    |mean_t - mean_c| / sqrt((var_t + var_c) / 2) with n-1 sample variances.
    """
    t = np.asarray(treatment_values, dtype=float)
    c = np.asarray(control_values, dtype=float)
    if len(t) < 2 or len(c) < 2:
        raise DataError("smd needs at least two values per group")
    diff = abs(t.mean() - c.mean())
    pooled = math.sqrt((t.var(ddof=1) + c.var(ddof=1)) / 2.0)
    if pooled == 0:
        if diff == 0:
            return 0.0
        raise DataError("smd undefined: both groups are constant with different means")
    return float(diff / pooled)


def _smd_across_controls(name: str, treated: pd.Series, controls: List[pd.Series]) -> BalanceRow:
    if treated.count() == 0:
        return BalanceRow(name, math.nan, math.nan, False, 0, flag="absent for all treatment users")
    values = []
    for control in controls:
        try:
            values.append(smd(treated.dropna(), control.dropna()))
        except DataError as exc:
            logger.debug("balance %s: control skipped: %s", name, exc)
    if not values:
        return BalanceRow(name, math.nan, math.nan, False, 0, flag="no comparable control group")
    mean = float(np.mean(values))
    return BalanceRow(name, mean, float(np.std(values)), mean <= BALANCE_THRESHOLD, len(values))


def balance_table(
    covariates: pd.DataFrame,
    cohort: Cohort,
    tau: float,
    w: float,
    schedule: VirtualBadgeSchedule,
) -> List[BalanceRow]:
    """
    |SMD| of every covariate between the treatment group and each control group

    Args:
        covariates: numeric columns indexed by user_id, NaN where missing
        cohort: validated users (start times decide group membership)
        tau: true badge time
        w: group window width
        schedule: virtual badges defining the control groups

    Returns:
        One BalanceRow per covariate, followed by a "<name>-NA" row for each
        covariate with missing values
    """
    def members(center: float) -> pd.DataFrame:
        return covariates.reindex(list(cohort.window(center, w).user_ids))

    treated = members(tau)
    controls = [members(t) for t in schedule.times]
    rows = []
    for name in covariates.columns:
        column = pd.to_numeric(covariates[name], errors="coerce")
        rows.append(_smd_across_controls(
            str(name),
            pd.to_numeric(treated[name], errors="coerce"),
            [pd.to_numeric(c[name], errors="coerce") for c in controls],
        ))
        if column.isna().any():
            rows.append(_smd_across_controls(
                f"{name}-NA",
                treated[name].isna().astype(float),
                [c[name].isna().astype(float) for c in controls],
            ))
    return rows


def balance_frame(rows: Sequence[BalanceRow]) -> pd.DataFrame:
    return pd.DataFrame(
        [(r.covariate, r.mean_smd, r.sd_smd, r.balanced, r.n_controls, r.flag) for r in rows],
        columns=["covariate", "mean_smd", "sd_smd", "balanced", "n_controls", "flag"],
    )


def popularity_buckets(counts: pd.Series, edges: Sequence[float] = POPULARITY_EDGES) -> pd.Series:
    """
    Label each entity by its popularity quantile (descending count)

    With the default edges the labels are "top 1%", "1-10%", "10-50%" and
    "bottom 50%".
    """
    share = counts.rank(method="first", ascending=False) / len(counts)
    bounds = [0.0, *edges, 1.0]
    labels = []
    for lo, hi in zip(bounds[:-1], bounds[1:]):
        if lo == 0.0:
            labels.append(f"top {hi * 100:g}%")
        elif hi == 1.0:
            labels.append(f"bottom {(1 - lo) * 100:g}%")
        else:
            labels.append(f"{lo * 100:g}-{hi * 100:g}%")
    return pd.cut(share, bins=bounds, labels=labels, include_lowest=True).astype(str)


def fit_grouped(
    groups: Mapping[Hashable, Cohort],
    tau: float,
    model: ModelKind = ModelKind.BASIC,
    rate: Optional[float] = None,
) -> List[GroupedFit]:
    """
    Two-regime fit per group, each with its own start times

    Empty groups are omitted with a warning; groups that cannot be fitted are
    returned with NaN hazards and a flag.
    """
    model = ModelKind(model)
    if model is ModelKind.ROBUST and rate is None:
        raise ValueError("the robust model needs a rate")
    fits = []
    for key, cohort in groups.items():
        if len(cohort) == 0:
            logger.warning("group %r is empty and was omitted", key)
            continue
        try:
            if model is ModelKind.ROBUST:
                fit = fit_alt_robust(cohort, tau, rate)
                basic = fit_alt_basic(cohort, tau)
                fits.append(GroupedFit(
                    key, fit.mean_intensity_pre, fit.mean_intensity_post,
                    fit.n_events_pre, fit.n_events_post, basic.exposure_pre, basic.exposure_post,
                    len(cohort), model, fit.k0, fit.k1, "; ".join(fit.warnings),
                ))
            else:
                fit = fit_alt_basic(cohort, tau)
                fits.append(GroupedFit(
                    key, fit.lambda0, fit.lambda1, fit.n_events_pre, fit.n_events_post,
                    fit.exposure_pre, fit.exposure_post, len(cohort), model, flag="; ".join(fit.warnings),
                ))
        except BadgeSurvivalError as exc:
            logger.warning("group %r cannot be fitted: %s", key, exc)
            fits.append(GroupedFit(key, math.nan, math.nan, 0, 0, 0.0, 0.0, len(cohort), model, flag=str(exc)))
    return fits


def grouped_frame(fits: Sequence[GroupedFit]) -> pd.DataFrame:
    return pd.DataFrame(
        [(f.group, f.model.value, f.lambda0_hat, f.lambda1_hat, f.n_events_pre, f.n_events_post,
          f.exposure_pre, f.exposure_post, f.n_units, f.flag) for f in fits],
        columns=["group", "model", "lambda0_hat", "lambda1_hat", "n_events_pre", "n_events_post",
                 "exposure_pre", "exposure_post", "n_units", "flag"],
    )


def moods_median_test(sample_a: Sequence[float], sample_b: Sequence[float]) -> Tuple[float, float]:
    """
    Mood's median test without continuity correction

    Values equal to the pooled median count as "not above".

    Returns:
        (chi2, p)
    """
    if len(sample_a) + len(sample_b) < 4:
        raise DataError("Mood's median test needs at least 4 observations")
    try:
        chi2, p, _, _ = stats.median_test(sample_a, sample_b, ties="below", correction=False)
    except ValueError as exc:
        raise DataError(f"Mood's median test undefined: {exc}") from exc
    if math.isnan(chi2):
        raise DataError("Mood's median test undefined: a zero margin in the contingency table")
    return float(chi2), float(p)


def intensity_series(
    cohort: Cohort,
    tau: float,
    w: float = 60.0,
    model: ModelKind = ModelKind.BASIC,
    rate: Optional[float] = None,
    stride: Optional[float] = None,
) -> IntensitySeries:
    """
    Sliding-window intensity estimates

    Each window of start times [c - w/2, c + w/2] is fitted with the
    single-regime model. Windows centred before tau are observed only up to
    tau, so they estimate the pre-badge intensity; the others are observed up
    to T and estimate the post-badge intensity. Robust estimates are shapes
    k, basic ones per-day hazards. Windows without usable data yield NaN.
    """
    if w <= 0:
        raise ValueError(f"window must be positive, got {w}")
    model = ModelKind(model)
    if model is ModelKind.ROBUST and rate is None:
        raise ValueError("the robust model needs a rate")
    step = stride if stride is not None else w / 4.0
    count = int(math.floor((cohort.horizon - w) / step + 1e-9)) + 1 if cohort.horizon >= w else 0
    centers = w / 2.0 + step * np.arange(max(count, 0))

    estimates, regimes, sizes, flags = [], [], [], []
    for c in centers:
        pre = c < tau
        group = cohort.window(c, w)
        if pre:
            group = group.truncate(tau)
        regimes.append("pre" if pre else "post")
        sizes.append(len(group))
        try:
            if len(group) == 0:
                raise DataError("empty window")
            if model is ModelKind.ROBUST:
                estimates.append(fit_null_robust(group, rate).k0)
            else:
                estimates.append(fit_null_basic(group).lambda0)
            flags.append("")
        except BadgeSurvivalError as exc:
            logger.debug("window at %g: %s", c, exc)
            estimates.append(math.nan)
            flags.append(str(exc))
    return IntensitySeries(
        centers=np.asarray(centers, dtype=float),
        estimates=np.asarray(estimates, dtype=float),
        regimes=tuple(regimes),
        n_users=np.asarray(sizes, dtype=int),
        window=float(w),
        model=model,
        flags=tuple(flags),
    )
