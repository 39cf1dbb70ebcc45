"""
Synthetic Generator Module - simulated users and the power-study harness

Users become eligible uniformly over [0, T] and act with a private
Gamma-distributed hazard that is redrawn when the badge appears, modulated by
a global linear trend (1 + a t). Action times are sampled by thinning.
"""

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from .bootstrap_did import bootstrap_test, treatment_group
from .errors import BadgeSurvivalError, ConfigError, FitError
from .events import CENSORED, ActionTime, EventRecord, ModelKind, StudyConfig, validate_records
from .survival_basic import llr_basic, wilks_pvalue

logger = logging.getLogger(__name__)

EFFECT_DELAY_DAYS = 10.0
METHODS = ("basic_theoretical", "basic_bootstrap", "robust_bootstrap")
MAX_FAILURE_SHARE = 0.10


@dataclass(frozen=True)
class SynthSpec:
    """
    Generator parameters

    Exactly one of k1 and target_dP must be given; target_dP is turned into
    k1 by calibrate_effect.
    """
    n_users: int = 10_000
    T: float = 360.0
    tau: Optional[float] = None
    r: float = 10.0
    k0: float = 0.1
    k1: Optional[float] = None
    target_dP: Optional[float] = None
    trend_a: float = 0.001
    seed: int = 0

    def __post_init__(self):
        if self.tau is None:
            object.__setattr__(self, "tau", self.T / 2.0)
        if (self.k1 is None) == (self.target_dP is None):
            raise ConfigError("exactly one of k1 and target_dP must be provided")
        if self.n_users < 0:
            raise ConfigError(f"n_users must be >= 0, got {self.n_users}")
        if not (0 < self.tau <= self.T):
            raise ConfigError(f"tau must lie in (0, T], got tau={self.tau}, T={self.T}")
        if self.r <= 0 or self.k0 < 0 or self.trend_a < 0:
            raise ConfigError("r must be positive, k0 and trend_a nonnegative")
        if self.k1 is not None and self.k1 < 0:
            raise ConfigError(f"k1 must be >= 0, got {self.k1}")

    @property
    def shape_post(self) -> float:
        if self.k1 is not None:
            return self.k1
        return calibrate_effect(self.k0, self.r, self.target_dP)


@dataclass
class PowerCurve:
    """Average p-value and rejection rate per method and effect strength"""
    effect_strengths: List[float]
    avg_p: Dict[str, List[float]]
    rejection_rate_at_005: Dict[str, List[float]]
    n_replicates: int
    n_failed: Dict[str, List[int]] = field(default_factory=dict)

    def to_frame(self) -> pd.DataFrame:
        rows = []
        for i, strength in enumerate(self.effect_strengths):
            for method in self.avg_p:
                rows.append((strength, method, self.avg_p[method][i], self.rejection_rate_at_005[method][i]))
        return pd.DataFrame(rows, columns=["strength", "method", "avg_p", "rejection_rate"])


def calibrate_effect(k0: float, r: float, target_dP: float, d: float = EFFECT_DELAY_DAYS) -> float:
    """
    Post-badge shape giving the requested rise in P(act within d days)

    Solves (r/(r+d))**k0 - (r/(r+d))**k1 = target_dP for k1, ignoring the trend.
    """
    if target_dP < 0:
        raise ConfigError(f"target_dP must be >= 0, got {target_dP}")
    base = r / (r + d)
    remaining = base ** k0 - target_dP
    if remaining <= 0:
        raise ConfigError(
            f"infeasible effect: P(act within {d:g} days) would exceed 1 "
            f"(target_dP={target_dP}, at most {base ** k0:.6g})"
        )
    if target_dP == 0:
        return float(k0)
    return float(math.log(remaining) / math.log(base))


def simulate_user(
    s: float,
    k0: float,
    k1: float,
    r: float,
    tau: float,
    trend_a: float,
    T: float,
    rng: np.random.Generator,
) -> ActionTime:
    """
    Draw one user's first action time by thinning

    Returns:
        action time in [s, T], or CENSORED
    """
    lam0 = rng.gamma(k0, 1.0 / r) if k0 > 0 else 0.0
    lam1 = rng.gamma(k1, 1.0 / r) if k1 > 0 else 0.0
    peak = 1.0 + trend_a * T

    t = s
    while t <= T:
        in_pre = t < tau
        lam = lam0 if in_pre else lam1
        boundary = tau if in_pre else math.inf
        if lam <= 0:
            if boundary > T:
                return CENSORED
            t = boundary
            continue
        candidate = t + rng.exponential(1.0 / (lam * peak))
        if candidate >= boundary:
            # memoryless restart at the regime switch
            t = boundary
            continue
        if candidate > T:
            return CENSORED
        t = candidate
        if rng.uniform() * peak <= 1.0 + trend_a * t:
            return t
    return CENSORED


def _user_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng([seed, index])


def simulate_cohort(spec: SynthSpec) -> List[EventRecord]:
    """n_users records with uniform start times; user i uses substream (seed, i)"""
    k1 = spec.shape_post
    records = []
    for index in range(spec.n_users):
        rng = _user_rng(spec.seed, index)
        s = float(rng.uniform(0.0, spec.T))
        t = simulate_user(s, spec.k0, k1, spec.r, spec.tau, spec.trend_a, spec.T, rng)
        records.append(EventRecord(index, s, t))
    return records


def monte_carlo_delta_p(
    k0: float,
    k1: float,
    r: float,
    d: float = EFFECT_DELAY_DAYS,
    trend_a: float = 0.0,
    n: int = 100_000,
    seed: int = 0,
    start: float = 0.0,
) -> float:
    """
    Monte Carlo estimate of the rise in P(act within d days of eligibility)

    Users eligible at `start` are simulated once entirely without and once
    entirely with the badge, trend included.
    """
    horizon = start + d
    rng = np.random.default_rng(seed)
    acted = {}
    for label, shape in (("without", k0), ("with", k1)):
        count = 0
        for _ in range(n):
            t = simulate_user(start, shape, shape, r, horizon, trend_a, horizon, rng)
            count += t is not CENSORED
        acted[label] = count / n
    return acted["with"] - acted["without"]


def _run_replicate(spec: SynthSpec, configs: Dict[str, StudyConfig]) -> Dict[str, float]:
    """p-value per method for one simulated cohort; NaN marks a failed method"""
    cohort = validate_records(simulate_cohort(spec), spec.T).cohort
    pvalues = {}
    for method in METHODS:
        config = configs[method]
        try:
            if method == "basic_theoretical":
                group = treatment_group(cohort, config.tau, config.window)
                pvalues[method] = wilks_pvalue(llr_basic(group, config.tau))
            else:
                pvalues[method] = bootstrap_test(cohort, config).p_value
        except BadgeSurvivalError as exc:
            logger.warning("replicate seed=%d, %s failed: %s", spec.seed, method, exc)
            pvalues[method] = math.nan
    return pvalues


def default_test_configs(spec: SynthSpec, **overrides) -> Dict[str, StudyConfig]:
    """Test configuration per method matching the generator's T, tau and r"""
    base = dict(tau=spec.tau, horizon=spec.T, window=60.0, rate=spec.r, seed=spec.seed)
    base.update(overrides)
    basic = StudyConfig(model=ModelKind.BASIC, **base)
    robust = StudyConfig(model=ModelKind.ROBUST, **base)
    return {"basic_theoretical": basic, "basic_bootstrap": basic, "robust_bootstrap": robust}


def run_power_study(
    strengths: Sequence[float],
    n_replicates: int,
    spec: SynthSpec,
    configs: Optional[Dict[str, StudyConfig]] = None,
    n_jobs: int = 1,
) -> PowerCurve:
    """
    Simulate cohorts at each effect strength and test them with all three methods

    Args:
        strengths: E[dP] values
        n_replicates: cohorts per strength
        spec: template; k1/target_dP are replaced per strength, seeds per replicate
        configs: StudyConfig per method, defaults from default_test_configs
        n_jobs: joblib workers over replicates

    Returns:
        PowerCurve
    """
    if n_replicates < 1:
        raise ValueError(f"n_replicates must be >= 1, got {n_replicates}")
    configs = configs or default_test_configs(spec)

    avg_p = {m: [] for m in METHODS}
    rejection = {m: [] for m in METHODS}
    failed = {m: [] for m in METHODS}
    for s_index, strength in enumerate(strengths):
        seeds = np.random.SeedSequence([spec.seed, s_index]).generate_state(n_replicates, dtype=np.uint64)
        replicate_specs = [
            replace(spec, k1=None, target_dP=float(strength), seed=int(seed)) for seed in seeds
        ]
        logger.info("power study: E[dP]=%g, %d replicate(s)", strength, n_replicates)
        results = Parallel(n_jobs=n_jobs)(
            delayed(_run_replicate)(rep, {m: replace(c, seed=rep.seed) for m, c in configs.items()})
            for rep in replicate_specs
        )
        for method in METHODS:
            pvalues = np.array([res[method] for res in results], dtype=float)
            ok = pvalues[~np.isnan(pvalues)]
            n_bad = n_replicates - len(ok)
            if n_bad > MAX_FAILURE_SHARE * n_replicates:
                raise FitError(
                    f"{method} failed on {n_bad} of {n_replicates} replicates at E[dP]={strength}"
                )
            avg_p[method].append(float(ok.mean()) if len(ok) else math.nan)
            rejection[method].append(float(np.mean(ok <= 0.05)) if len(ok) else math.nan)
            failed[method].append(n_bad)

    return PowerCurve(list(map(float, strengths)), avg_p, rejection, n_replicates, failed)
