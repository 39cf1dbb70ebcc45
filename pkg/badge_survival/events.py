"""
Event Data Module - user observations, study configuration and exposure segments

Each user is observed as a (start time, action time, utility) tuple over the
study window [0, T]. Times are fractional days since the study epoch. A user
who never acts inside the window carries the CENSORED marker instead of a
numeric action time.
"""

import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import ConfigError, DataError

logger = logging.getLogger(__name__)

DEFAULT_RATE_GRID: Tuple[float, ...] = (0.1, 1.0, 10.0, 100.0, 1000.0)


class _Censored:
    """Marker for an action that did not happen inside the observation window"""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "CENSORED"

    def __reduce__(self):
        return "CENSORED"


CENSORED = _Censored()

ActionTime = Union[float, _Censored]


def is_censored(action_time: ActionTime) -> bool:
    return action_time is CENSORED


class ModelKind(str, Enum):
    """Survival model used for fits and tests"""
    BASIC = "basic"
    ROBUST = "robust"


class Placement(str, Enum):
    """How virtual badge times are chosen"""
    UNIFORM_RANDOM = "uniform_random"
    SLIDING_WINDOW = "sliding_window"


class FollowUp(str, Enum):
    """How long each treatment/control group is observed"""
    HORIZON = "horizon"
    WINDOW = "window"


@dataclass(frozen=True)
class EventRecord:
    """One user's observation: eligibility start, first action (or CENSORED), utility"""
    user_id: Any
    start_time: float
    action_time: ActionTime = CENSORED
    # never read by any operation
    utility: Optional[float] = None

    @property
    def censored(self) -> bool:
        return self.action_time is CENSORED


@dataclass(frozen=True)
class ExposureSegments:
    """Exposure of one user under the pre-badge and post-badge hazards"""
    pre_duration: float
    post_duration: float
    event_pre: bool
    event_post: bool


@dataclass(frozen=True)
class SegmentArrays:
    """Vectorized ExposureSegments for a whole cohort"""
    pre_duration: np.ndarray
    post_duration: np.ndarray
    event_pre: np.ndarray
    event_post: np.ndarray


@dataclass(frozen=True)
class StudyConfig:
    """
    Parameters of one badge study

    Attributes:
        tau: badge introduction time (days)
        horizon: end of the observation window T (days)
        window: width w of the treatment and control start windows (days)
        model: survival model used by the test
        rate: fixed Gamma rate r, or a grid of candidate rates chosen by CV
        n_controls: number of virtual badges for uniform placement
        seed: master seed of every randomized step
        placement: virtual badge placement mode
        folds: cross-validation folds for rate selection
        stride: sliding-window step, defaults to window / 4
        min_controls: minimum usable control groups for a bootstrap test
        follow_up: observe each group until T, or until its window end
        n_jobs: joblib workers for control fits and replicates
    """
    tau: float
    horizon: float
    window: float = 60.0
    model: ModelKind = ModelKind.BASIC
    rate: Union[float, Tuple[float, ...]] = DEFAULT_RATE_GRID
    n_controls: int = 200
    seed: int = 0
    placement: Placement = Placement.UNIFORM_RANDOM
    folds: int = 5
    stride: Optional[float] = None
    min_controls: int = 20
    follow_up: FollowUp = FollowUp.HORIZON
    n_jobs: int = 1

    def __post_init__(self):
        object.__setattr__(self, "model", _coerce_enum(ModelKind, self.model, "model"))
        object.__setattr__(self, "placement", _coerce_enum(Placement, self.placement, "placement"))
        object.__setattr__(self, "follow_up", _coerce_enum(FollowUp, self.follow_up, "follow_up"))
        if isinstance(self.rate, (list, tuple)):
            object.__setattr__(self, "rate", tuple(float(r) for r in self.rate))

        if not (0 < self.tau <= self.horizon):
            raise ConfigError(f"tau must lie in (0, T], got tau={self.tau}, T={self.horizon}")
        if self.window < 0:
            raise ConfigError(f"window must be >= 0, got {self.window}")
        if not self.virtual_badge_ranges():
            raise ConfigError(
                f"no room for virtual badges: [w/2, tau-w] and [tau+w, T-w/2] are both empty "
                f"(tau={self.tau}, T={self.horizon}, w={self.window})"
            )
        rates = self.rate_grid
        if not rates or any(not (r > 0 and math.isfinite(r)) for r in rates):
            raise ConfigError(f"rate must be a positive number or a nonempty grid of them, got {self.rate!r}")
        if self.n_controls <= 0:
            raise ConfigError(f"n_controls must be positive, got {self.n_controls}")
        if not (0 <= self.seed < 2 ** 64):
            raise ConfigError(f"seed must be a 64-bit unsigned integer, got {self.seed}")
        if self.folds < 2:
            raise ConfigError(f"folds must be >= 2, got {self.folds}")
        if self.min_controls < 1:
            raise ConfigError(f"min_controls must be >= 1, got {self.min_controls}")
        if self.placement is Placement.SLIDING_WINDOW and not self.effective_stride > 0:
            raise ConfigError("sliding_window placement needs a positive stride (window is 0)")

    @property
    def rate_grid(self) -> Tuple[float, ...]:
        if isinstance(self.rate, tuple):
            return self.rate
        return (float(self.rate),)

    @property
    def rate_is_fixed(self) -> bool:
        return len(self.rate_grid) == 1

    @property
    def effective_stride(self) -> float:
        return self.stride if self.stride is not None else self.window / 4.0

    def virtual_badge_ranges(self) -> List[Tuple[float, float]]:
        """Nonempty intervals of [w/2, tau-w] and [tau+w, T-w/2]"""
        return virtual_badge_ranges(self.horizon, self.tau, self.window)

    @classmethod
    def from_mapping(cls, values: Mapping[str, Any]) -> "StudyConfig":
        """
        Build a config from a flat mapping of (possibly string) values

        Args:
            values: keys as in the config file, e.g. {"tau": "180", "rate": "1,10"}

        Returns:
            Validated StudyConfig
        """
        unknown = set(values) - set(_PARSERS)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
        missing = {"tau", "horizon"} - set(values)
        if missing:
            raise ConfigError(f"missing required config keys: {', '.join(sorted(missing))}")
        kwargs = {}
        for key, raw in values.items():
            if raw is None:
                continue
            try:
                kwargs[key] = _PARSERS[key](raw)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"bad value for '{key}': {raw!r} ({exc})") from exc
        return cls(**kwargs)


def _coerce_enum(enum_cls, value, name):
    try:
        return enum_cls(value)
    except ValueError:
        choices = ", ".join(m.value for m in enum_cls)
        raise ConfigError(f"{name} must be one of {choices}, got {value!r}")


def _parse_rate(raw) -> Union[float, Tuple[float, ...]]:
    if isinstance(raw, (int, float)):
        return float(raw)
    if isinstance(raw, (list, tuple)):
        return tuple(float(r) for r in raw)
    parts = [p.strip() for p in str(raw).split(",") if p.strip()]
    if len(parts) == 1:
        return float(parts[0])
    return tuple(float(p) for p in parts)


def _parse_optional_float(raw) -> Optional[float]:
    if raw in ("", "none", "None"):
        return None
    return float(raw)


_PARSERS = {
    "tau": float,
    "horizon": float,
    "window": float,
    "model": str,
    "rate": _parse_rate,
    "n_controls": int,
    "seed": int,
    "placement": str,
    "folds": int,
    "stride": _parse_optional_float,
    "min_controls": int,
    "follow_up": str,
    "n_jobs": int,
}


def virtual_badge_ranges(horizon: float, tau: float, window: float) -> List[Tuple[float, float]]:
    candidates = [(window / 2.0, tau - window), (tau + window, horizon - window / 2.0)]
    return [(lo, hi) for lo, hi in candidates if lo <= hi]


@dataclass(frozen=True, eq=False)
class Cohort:
    """
    Immutable column view of validated users

    Censored users have NaN in `action`; an action recorded after the horizon
    is treated as censored at the horizon by every likelihood.
    """
    user_ids: np.ndarray
    start: np.ndarray
    action: np.ndarray
    horizon: float

    def __len__(self) -> int:
        return len(self.start)

    @property
    def observed(self) -> np.ndarray:
        """Users whose action falls inside [0, T]"""
        with np.errstate(invalid="ignore"):
            return ~np.isnan(self.action) & (self.action <= self.horizon)

    @property
    def end(self) -> np.ndarray:
        """min(t_u, T) with censored users at T"""
        return np.where(self.observed, self.action, self.horizon)

    def select(self, mask: np.ndarray) -> "Cohort":
        return Cohort(self.user_ids[mask], self.start[mask], self.action[mask], self.horizon)

    def window(self, center: float, width: float) -> "Cohort":
        """Users with start in [center - width/2, center + width/2], inclusive"""
        half = width / 2.0
        return self.select((self.start >= center - half) & (self.start <= center + half))

    def truncate(self, horizon: float) -> "Cohort":
        """Shorten the observation window; late starters leave, late actions become censored"""
        keep = self.start <= horizon
        action = self.action[keep].copy()
        with np.errstate(invalid="ignore"):
            action[action > horizon] = np.nan
        return Cohort(self.user_ids[keep], self.start[keep], action, float(horizon))

    def records(self) -> List[EventRecord]:
        return [
            EventRecord(uid, float(s), CENSORED if np.isnan(t) else float(t))
            for uid, s, t in zip(self.user_ids, self.start, self.action)
        ]

    @classmethod
    def from_records(cls, records: Sequence[EventRecord], horizon: float) -> "Cohort":
        user_ids = np.empty(len(records), dtype=object)
        user_ids[:] = [r.user_id for r in records]
        start = np.array([r.start_time for r in records], dtype=float)
        action = np.array([np.nan if r.censored else r.action_time for r in records], dtype=float)
        return cls(user_ids, start, action, float(horizon))


@dataclass(frozen=True)
class ValidationReport:
    """Outcome of validate_dataset"""
    cohort: Cohort
    dropped: Dict[str, int] = field(default_factory=dict)

    @property
    def n_dropped(self) -> int:
        return sum(self.dropped.values())


def _rejection_reason(record: EventRecord, horizon: float) -> Optional[str]:
    s = record.start_time
    if s is None or not math.isfinite(s):
        return "non_finite_start"
    if s < 0:
        return "negative_start"
    if s > horizon:
        return "start_beyond_horizon"
    if not record.censored:
        t = record.action_time
        if t is None or not math.isfinite(t):
            return "non_finite_action"
        if t < s:
            return "action_before_start"
    return None


def validate_records(events: Iterable[EventRecord], horizon: float) -> ValidationReport:
    """
    Keep the records satisfying every EventRecord invariant and start <= T

    Args:
        events: raw records
        horizon: observation horizon T

    Returns:
        ValidationReport with the cohort and per-reason drop counts
    """
    kept: List[EventRecord] = []
    dropped: Counter = Counter()
    for record in events:
        reason = _rejection_reason(record, horizon)
        if reason is None:
            kept.append(record)
        else:
            dropped[reason] += 1

    for reason, count in sorted(dropped.items()):
        logger.warning("dropped %d record(s): %s", count, reason)
    if not kept:
        raise DataError(f"no valid records left after validation (dropped: {dict(dropped)})")
    return ValidationReport(Cohort.from_records(kept, horizon), dict(sorted(dropped.items())))


def validate_dataset(events: Iterable[EventRecord], config: StudyConfig) -> ValidationReport:
    return validate_records(events, config.horizon)


def exposure_segments(record: EventRecord, tau: float, horizon: float) -> ExposureSegments:
    """
    Split one user's exposure at the badge time

    The post segment starts at max(s, tau): exposure cannot precede
    eligibility.
    """
    s = record.start_time
    t = math.inf if record.censored else record.action_time
    end = min(t, horizon)

    pre = (min(t, tau) - s) if s < tau else 0.0
    post = (end - max(s, tau)) if (t > tau and s <= end) else 0.0
    return ExposureSegments(
        pre_duration=max(pre, 0.0),
        post_duration=max(post, 0.0),
        event_pre=t <= tau,
        event_post=tau < t <= horizon,
    )


def cohort_segments(cohort: Cohort, tau: float) -> SegmentArrays:
    """Vectorized exposure_segments over a cohort"""
    s = cohort.start
    observed = ~np.isnan(cohort.action)
    t = np.where(observed, cohort.action, np.inf)
    end = np.minimum(t, cohort.horizon)

    pre = np.where(s < tau, np.minimum(t, tau) - s, 0.0)
    post = np.where((t > tau) & (s <= end), end - np.maximum(s, tau), 0.0)
    return SegmentArrays(
        pre_duration=np.maximum(pre, 0.0),
        post_duration=np.maximum(post, 0.0),
        event_pre=t <= tau,
        event_post=(t > tau) & (t <= cohort.horizon),
    )
