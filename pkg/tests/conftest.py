"""Shared fixtures for the badge_survival test suite."""

import numpy as np
import pytest

from badge_survival.events import CENSORED, Cohort, EventRecord
from badge_survival.synthgen import SynthSpec, simulate_cohort


def make_cohort(pairs, horizon):
    """Cohort from (start, action) pairs; action None means censored."""
    records = [
        EventRecord(i, float(s), CENSORED if t is None else float(t))
        for i, (s, t) in enumerate(pairs)
    ]
    return Cohort.from_records(records, horizon)


def random_cohort(rng, horizon=10.0, max_users=20):
    """Small random valid cohort with a mix of censored and observed users."""
    n = int(rng.integers(2, max_users + 1))
    pairs = []
    for _ in range(n):
        s = float(rng.uniform(0, horizon))
        if rng.uniform() < 0.3:
            pairs.append((s, None))
        else:
            pairs.append((s, float(rng.uniform(s, horizon))))
    return make_cohort(pairs, horizon)


@pytest.fixture
def cohort_factory():
    return make_cohort


@pytest.fixture(scope="session")
def null_cohort():
    """Synthetic cohort without a badge effect (k1 == k0)."""
    spec = SynthSpec(n_users=3000, T=360.0, tau=180.0, r=10.0, k0=0.5, k1=0.5, trend_a=0.0, seed=7)
    return Cohort.from_records(simulate_cohort(spec), spec.T)


@pytest.fixture(scope="session")
def effect_cohort():
    """Synthetic cohort whose shape quadruples at the badge."""
    spec = SynthSpec(n_users=3000, T=360.0, tau=180.0, r=10.0, k0=0.2, k1=0.8, trend_a=0.0, seed=11)
    return Cohort.from_records(simulate_cohort(spec), spec.T)


@pytest.fixture
def rng():
    return np.random.default_rng(20240101)
