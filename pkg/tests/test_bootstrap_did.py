"""Tests for the bootstrap difference-in-differences test."""

import numpy as np
import pytest

from badge_survival import bootstrap_did
from badge_survival.bootstrap_did import (
    Ecdf,
    bootstrap_test,
    empirical_pvalue,
    group_llr,
    llr_series,
    place_virtual_badges,
    resolve_rate,
    treatment_group,
)
from badge_survival.errors import DataError, FitError
from badge_survival.events import Cohort, FollowUp, ModelKind, Placement, StudyConfig
from badge_survival.survival_basic import llr_basic
from badge_survival.synthgen import SynthSpec, simulate_cohort

from conftest import make_cohort


def small_config(**overrides):
    values = dict(tau=180.0, horizon=360.0, window=60.0, n_controls=40, min_controls=10, seed=1)
    values.update(overrides)
    return StudyConfig(**values)


class TestTreatmentGroup:
    """Users eligible within w/2 of the badge."""

    def test_window(self):
        cohort = make_cohort([(170, None), (180, None), (190, None), (211, None)], 360.0)
        assert sorted(treatment_group(cohort, 180.0, 60.0).start) == [170, 180, 190]

    def test_zero_width(self):
        cohort = make_cohort([(179.5, None), (180, None)], 360.0)
        assert list(treatment_group(cohort, 180.0, 0.0).start) == [180]

    def test_empty(self):
        cohort = make_cohort([(10, None), (300, None)], 360.0)
        with pytest.raises(DataError, match="empty group"):
            treatment_group(cohort, 180.0, 60.0)


class TestPlaceVirtualBadges:
    """Virtual badges stay inside the allowed ranges."""

    def test_uniform_inside_ranges(self):
        schedule = place_virtual_badges(360.0, 180.0, 60.0, 500, Placement.UNIFORM_RANDOM, seed=2)
        times = np.array(schedule.times)
        assert len(times) == 500
        inside = ((times >= 30) & (times <= 120)) | ((times >= 240) & (times <= 330))
        assert inside.all()
        assert (times < 180).any() and (times > 180).any()

    def test_no_controls(self):
        assert place_virtual_badges(360.0, 180.0, 60.0, 0).times == ()

    def test_deterministic(self):
        first = place_virtual_badges(360.0, 180.0, 60.0, 25, seed=9)
        second = place_virtual_badges(360.0, 180.0, 60.0, 25, seed=9)
        assert first.times == second.times
        assert first.times != place_virtual_badges(360.0, 180.0, 60.0, 25, seed=10).times

    def test_prefix_stable(self):
        """Draw i does not depend on how many draws were requested."""
        short = place_virtual_badges(360.0, 180.0, 60.0, 5, seed=9)
        long = place_virtual_badges(360.0, 180.0, 60.0, 50, seed=9)
        assert long.times[:5] == short.times

    def test_sliding_window(self):
        schedule = place_virtual_badges(360.0, 180.0, 60.0, 0, Placement.SLIDING_WINDOW, stride=15.0)
        expected = [30 + 15 * i for i in range(7)] + [240 + 15 * i for i in range(7)]
        np.testing.assert_allclose(schedule.times, expected)

    def test_no_room(self):
        with pytest.raises(DataError):
            place_virtual_badges(100.0, 50.0, 80.0, 10)


class TestEmpiricalPvalue:
    """Add-one upper-tail p-value."""

    def test_count_rule(self):
        assert empirical_pvalue(2.5, [1.0, 2.0, 3.0]) == pytest.approx(0.5)

    def test_ties_count_as_exceeding(self):
        assert empirical_pvalue(2.0, [2.0, 2.0, 2.0]) == pytest.approx(1.0)

    def test_domain_and_monotonicity(self, rng):
        controls = rng.exponential(size=99)
        previous = 1.0
        for llr in np.linspace(0, 10, 200):
            p = empirical_pvalue(llr, controls)
            assert 1 / 100 <= p <= 1.0
            assert p <= previous
            previous = p


class TestEcdf:
    """Right-continuous step function."""

    def test_values(self):
        ecdf = Ecdf.from_sample([3.0, 1.0, 2.0])
        np.testing.assert_allclose(ecdf([0.5, 1.0, 2.5, 3.0]), [0.0, 1 / 3, 2 / 3, 1.0])

    def test_frame_is_sorted(self):
        frame = Ecdf.from_sample([3.0, 1.0, 2.0]).to_frame()
        assert list(frame.columns) == ["llr", "ecdf"]
        assert frame["llr"].is_monotonic_increasing
        assert frame["ecdf"].iloc[-1] == 1.0


class TestBootstrapTest:
    """End-to-end test on synthetic cohorts."""

    def test_result_shape(self, null_cohort):
        result = bootstrap_test(null_cohort, small_config())
        assert result.n_controls_used + result.n_controls_dropped == 40
        assert len(result.llr_controls) == result.n_controls_used
        assert 1 / (result.n_controls_used + 1) <= result.p_value <= 1.0
        assert result.treatment_size == len(null_cohort.window(180.0, 60.0))
        assert list(result.control_times) == sorted(result.control_times)
        assert result.p_value == empirical_pvalue(result.llr_treatment, result.llr_controls)

    def test_treatment_llr_matches_group_fit(self, null_cohort):
        result = bootstrap_test(null_cohort, small_config())
        assert result.llr_treatment == pytest.approx(llr_basic(null_cohort.window(180.0, 60.0), 180.0))

    def test_deterministic(self, null_cohort):
        first = bootstrap_test(null_cohort, small_config())
        second = bootstrap_test(null_cohort, small_config())
        assert first.llr_controls == second.llr_controls
        assert first.p_value == second.p_value

    def test_parallel_matches_serial(self, null_cohort):
        serial = bootstrap_test(null_cohort, small_config(n_jobs=1))
        parallel = bootstrap_test(null_cohort, small_config(n_jobs=2))
        assert serial.llr_controls == parallel.llr_controls

    def test_too_few_controls(self, null_cohort):
        with pytest.raises(FitError, match="usable control"):
            bootstrap_test(null_cohort, small_config(n_controls=5, min_controls=20))

    def test_robust_with_fixed_rate(self, null_cohort):
        result = bootstrap_test(null_cohort, small_config(model=ModelKind.ROBUST, rate=10.0))
        assert result.model is ModelKind.ROBUST
        assert result.rate == 10.0

    def test_detects_strong_effect(self, effect_cohort):
        config = small_config(model=ModelKind.ROBUST, rate=10.0, n_controls=60, follow_up=FollowUp.WINDOW)
        result = bootstrap_test(effect_cohort, config)
        assert result.p_value < 0.05

    def test_window_follow_up(self, null_cohort):
        result = bootstrap_test(null_cohort, small_config(follow_up=FollowUp.WINDOW))
        truncated = null_cohort.window(180.0, 60.0).truncate(210.0)
        assert result.llr_treatment == pytest.approx(llr_basic(truncated, 180.0))

    def test_sliding_placement(self, null_cohort):
        result = bootstrap_test(null_cohort, small_config(placement=Placement.SLIDING_WINDOW))
        assert result.n_controls_used + result.n_controls_dropped == 14

    @pytest.mark.parametrize("follow_up", [FollowUp.HORIZON, FollowUp.WINDOW])
    def test_groups_start_inside_their_window(self, null_cohort, monkeypatch, follow_up):
        seen = []

        def recording_llr(group, tau, model, rate=None):
            seen.append((tau, group))
            return group_llr(group, tau, model, rate)

        monkeypatch.setattr(bootstrap_did, "group_llr", recording_llr)
        config = small_config(follow_up=follow_up)
        result = bootstrap_test(null_cohort, config)
        assert len(seen) >= 1 + result.n_controls_used
        for tau, group in seen:
            assert len(group) > 0
            assert np.all(np.abs(group.start - tau) <= config.window / 2 + 1e-9)
            expected = tau + config.window / 2 if follow_up is FollowUp.WINDOW else config.horizon
            assert group.horizon == pytest.approx(min(expected, config.horizon))

    @pytest.mark.slow
    def test_null_calibration(self):
        """Without an effect the test rarely rejects at the 5% level."""
        rejections = 0
        for seed in range(20):
            spec = SynthSpec(n_users=2000, T=360.0, tau=180.0, r=1000.0, k0=50.0, k1=50.0,
                             trend_a=0.0, seed=seed)
            cohort = Cohort.from_records(simulate_cohort(spec), spec.T)
            rejections += bootstrap_test(cohort, small_config(n_controls=50, seed=seed)).p_value <= 0.05
        assert rejections <= 4


class TestRateAndSeries:
    """Rate resolution and LLR over virtual badge time."""

    def test_basic_has_no_rate(self, null_cohort):
        assert resolve_rate(null_cohort, small_config()) is None

    def test_fixed_rate(self, null_cohort):
        assert resolve_rate(null_cohort, small_config(model="robust", rate=5.0)) == 5.0

    def test_group_llr_needs_rate(self, null_cohort):
        with pytest.raises(ValueError):
            group_llr(null_cohort, 180.0, ModelKind.ROBUST)

    def test_llr_series(self, null_cohort):
        frame = llr_series(null_cohort, small_config())
        assert list(frame.columns) == ["tau", "llr", "role", "n_users"]
        assert (frame["role"] == "treatment").sum() == 1
        assert (frame["role"] == "control").sum() == 14
        assert frame["tau"].is_monotonic_increasing
