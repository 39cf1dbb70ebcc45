"""Tests for event records, validation, study configuration and exposure segments."""

import numpy as np
import pytest

from badge_survival.errors import ConfigError, DataError
from badge_survival.events import (
    CENSORED,
    Cohort,
    EventRecord,
    FollowUp,
    ModelKind,
    Placement,
    StudyConfig,
    cohort_segments,
    exposure_segments,
    validate_dataset,
    validate_records,
    virtual_badge_ranges,
)

from conftest import random_cohort


class TestValidateDataset:
    """Records violating an invariant are dropped and counted by reason."""

    def test_all_valid(self):
        records = [EventRecord("a", 0.0, 2.0), EventRecord("b", 0.0)]
        config = StudyConfig(tau=2.0, horizon=4.0, window=0.5)
        report = validate_dataset(records, config)
        assert len(report.cohort) == 2
        assert report.n_dropped == 0

    def test_action_before_start_leaves_nothing(self):
        with pytest.raises(DataError, match="action_before_start"):
            validate_records([EventRecord("a", 5.0, 3.0)], horizon=10.0)

    def test_start_beyond_horizon(self):
        report = validate_records([EventRecord("a", 0.0, 2.0), EventRecord("b", 10.0, 12.0)], horizon=4.0)
        assert len(report.cohort) == 1
        assert report.dropped == {"start_beyond_horizon": 1}

    @pytest.mark.parametrize("start, action, reason", [
        (float("nan"), 1.0, "non_finite_start"),
        (float("inf"), CENSORED, "non_finite_start"),
        (-1.0, CENSORED, "negative_start"),
        (1.0, float("nan"), "non_finite_action"),
    ])
    def test_rejection_reasons(self, start, action, reason):
        report = validate_records([EventRecord("ok", 0.0), EventRecord("bad", start, action)], horizon=5.0)
        assert report.dropped == {reason: 1}

    def test_censored_records_become_nan(self):
        report = validate_records([EventRecord("a", 1.0), EventRecord("b", 1.0, 2.0)], horizon=5.0)
        assert np.isnan(report.cohort.action[0])
        assert report.cohort.records()[0].action_time is CENSORED


class TestExposureSegments:
    """Pre/post exposure split at the badge time."""

    def test_event_before_badge(self):
        seg = exposure_segments(EventRecord(1, 0.0, 0.5), tau=1.0, horizon=4.0)
        assert seg.pre_duration == pytest.approx(0.5)
        assert seg.post_duration == 0.0
        assert seg.event_pre and not seg.event_post

    def test_event_after_badge(self):
        seg = exposure_segments(EventRecord(1, 0.0, 2.0), tau=1.0, horizon=4.0)
        assert seg.pre_duration == pytest.approx(1.0)
        assert seg.post_duration == pytest.approx(1.0)
        assert seg.event_post and not seg.event_pre

    def test_censored_user_eligible_after_badge(self):
        seg = exposure_segments(EventRecord(1, 2.0), tau=1.0, horizon=4.0)
        assert seg.pre_duration == 0.0
        assert seg.post_duration == pytest.approx(2.0)
        assert not seg.event_pre and not seg.event_post

    def test_vectorized_agrees_with_scalar(self, rng):
        for _ in range(50):
            cohort = random_cohort(rng)
            tau = float(rng.uniform(0.1, cohort.horizon))
            seg = cohort_segments(cohort, tau)
            for i, record in enumerate(cohort.records()):
                scalar = exposure_segments(record, tau, cohort.horizon)
                assert seg.pre_duration[i] == pytest.approx(scalar.pre_duration)
                assert seg.post_duration[i] == pytest.approx(scalar.post_duration)
                assert seg.event_pre[i] == scalar.event_pre
                assert seg.event_post[i] == scalar.event_post

    def test_invariants(self, rng):
        for _ in range(50):
            cohort = random_cohort(rng)
            tau = float(rng.uniform(0.1, cohort.horizon))
            seg = cohort_segments(cohort, tau)
            assert not np.any(seg.event_pre & seg.event_post)
            assert np.all(seg.pre_duration + seg.post_duration <= cohort.horizon - cohort.start + 1e-12)
            assert np.all(seg.post_duration[seg.event_pre] == 0)


class TestStudyConfig:
    """Validation and construction of study configurations."""

    def test_defaults(self):
        config = StudyConfig(tau=180.0, horizon=360.0)
        assert config.model is ModelKind.BASIC
        assert config.placement is Placement.UNIFORM_RANDOM
        assert config.follow_up is FollowUp.HORIZON
        assert config.effective_stride == pytest.approx(15.0)
        assert not config.rate_is_fixed

    def test_virtual_badge_ranges(self):
        assert virtual_badge_ranges(360.0, 180.0, 60.0) == [(30.0, 120.0), (240.0, 330.0)]

    @pytest.mark.parametrize("kwargs", [
        dict(tau=0.0, horizon=360.0),
        dict(tau=400.0, horizon=360.0),
        dict(tau=180.0, horizon=360.0, window=200.0),
        dict(tau=180.0, horizon=360.0, rate=-1.0),
        dict(tau=180.0, horizon=360.0, rate=()),
        dict(tau=180.0, horizon=360.0, n_controls=0),
        dict(tau=180.0, horizon=360.0, model="weibull"),
        dict(tau=180.0, horizon=360.0, folds=1),
    ])
    def test_rejects_invalid(self, kwargs):
        with pytest.raises(ConfigError):
            StudyConfig(**kwargs)

    def test_from_mapping_parses_strings(self):
        config = StudyConfig.from_mapping({
            "tau": "180", "horizon": "360", "rate": "1, 10", "model": "robust",
            "placement": "sliding_window", "seed": "3", "stride": "",
        })
        assert config.rate == (1.0, 10.0)
        assert config.model is ModelKind.ROBUST
        assert config.placement is Placement.SLIDING_WINDOW
        assert config.seed == 3
        assert config.stride is None

    def test_from_mapping_single_rate(self):
        config = StudyConfig.from_mapping({"tau": "180", "horizon": "360", "rate": "10"})
        assert config.rate_is_fixed
        assert config.rate_grid == (10.0,)

    def test_from_mapping_unknown_key(self):
        with pytest.raises(ConfigError, match="unknown"):
            StudyConfig.from_mapping({"tau": "180", "horizon": "360", "colour": "red"})

    def test_from_mapping_missing_key(self):
        with pytest.raises(ConfigError, match="horizon"):
            StudyConfig.from_mapping({"tau": "180"})

    def test_from_mapping_bad_value(self):
        with pytest.raises(ConfigError, match="n_controls"):
            StudyConfig.from_mapping({"tau": "180", "horizon": "360", "n_controls": "many"})


class TestCohort:
    """Column view operations."""

    def test_window_is_inclusive(self, cohort_factory):
        cohort = cohort_factory([(170, None), (180, None), (190, None), (211, None), (150, None)], 360.0)
        assert sorted(cohort.window(180.0, 60.0).start) == [150, 170, 180, 190]

    def test_truncate(self, cohort_factory):
        cohort = cohort_factory([(0, 5), (3, 7), (8, 9)], 10.0)
        short = cohort.truncate(6.0)
        assert len(short) == 2
        assert short.horizon == 6.0
        np.testing.assert_array_equal(short.observed, [True, False])

    def test_action_after_horizon_is_censored(self, cohort_factory):
        cohort = cohort_factory([(0, 12)], 10.0)
        assert not cohort.observed[0]
        assert cohort.end[0] == 10.0

    def test_round_trip_through_records(self, cohort_factory):
        cohort = cohort_factory([(0, 1), (2, None)], 4.0)
        again = Cohort.from_records(cohort.records(), cohort.horizon)
        np.testing.assert_array_equal(again.start, cohort.start)
        np.testing.assert_array_equal(again.observed, cohort.observed)
