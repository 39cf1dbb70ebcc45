"""Tests for the TSV formats, eligibility derivation and the config file."""

import logging
import math

import numpy as np
import pandas as pd
import pytest

from badge_survival.counterfactual import ASKER, OTHER
from badge_survival.errors import ConfigError, DataError
from badge_survival.events import CENSORED, EventRecord, StudyConfig
from badge_survival.ingest import (
    derive_eligibility,
    eligibility_records,
    load_config_file,
    merge_reputation_logs,
    parse_actions_file,
    parse_covariates_file,
    parse_events_file,
    parse_groups_file,
    parse_questions_file,
    parse_reputation_file,
    parse_tags_file,
    write_events_file,
)


def write(path, *lines):
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


class TestEventsFile:
    """Events TSV parsing and writing."""

    def test_parse(self, tmp_path):
        path = write(tmp_path / "events.tsv", "user_id\tstart\taction", "42\t10.5\t12.0", "43\t10.5\t")
        records = parse_events_file(path)
        assert records == [EventRecord("42", 10.5, 12.0), EventRecord("43", 10.5, CENSORED)]
        assert records[1].censored

    def test_bad_number_reports_position(self, tmp_path):
        path = write(tmp_path / "events.tsv", "user_id\tstart\taction", "42\t10.5\t12.0", "43\t10.5\t", "44\tabc\t1")
        with pytest.raises(DataError) as info:
            parse_events_file(path)
        assert info.value.line == 4
        assert info.value.column == "start"
        assert "line 4" in str(info.value)

    def test_censored_row_without_trailing_tab(self, tmp_path):
        path = write(tmp_path / "events.tsv", "user_id\tstart\taction", "42\t10.5\t12.0", "43\t10.5")
        assert parse_events_file(path) == [EventRecord("42", 10.5, 12.0), EventRecord("43", 10.5, CENSORED)]

    def test_missing_start_field(self, tmp_path):
        path = write(tmp_path / "events.tsv", "user_id\tstart\taction", "42\t10.5\t12.0", "43")
        with pytest.raises(DataError, match="missing field") as info:
            parse_events_file(path)
        assert (info.value.line, info.value.column) == (3, "start")

    def test_literal_nan_rejected(self, tmp_path):
        path = write(tmp_path / "events.tsv", "user_id\tstart\taction", "42\tnan\t12.0")
        with pytest.raises(DataError, match="cannot parse"):
            parse_events_file(path)

    def test_empty_start_rejected(self, tmp_path):
        path = write(tmp_path / "events.tsv", "user_id\tstart\taction", "1\t\t3")
        with pytest.raises(DataError):
            parse_events_file(path)

    def test_duplicate_user(self, tmp_path):
        path = write(tmp_path / "events.tsv", "user_id\tstart\taction", "1\t0\t1", "1\t2\t")
        with pytest.raises(DataError) as info:
            parse_events_file(path)
        assert info.value.line == 3

    def test_bad_header(self, tmp_path):
        path = write(tmp_path / "events.tsv", "user\tstart\taction", "1\t0\t1")
        with pytest.raises(DataError):
            parse_events_file(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataError):
            parse_events_file(tmp_path / "nope.tsv")

    def test_write_then_parse(self, tmp_path):
        records = [EventRecord("a", 0.5, 12.25), EventRecord("b", 1.0, CENSORED)]
        path = tmp_path / "out" / "events.tsv"
        write_events_file(records, path)
        assert path.read_text(encoding="utf-8").splitlines()[0] == "user_id\tstart\taction"
        assert parse_events_file(path) == records


class TestEligibility:
    """Start times derived from a reputation log."""

    def log(self):
        return pd.DataFrame({
            "user_id": ["a", "a", "a", "b", "b", "c"],
            "time": [1.0, 2.0, 3.0, 1.0, 4.0, 0.0],
            "reputation": [10.0, 80.0, 90.0, 5.0, 20.0, 75.0],
        })

    def test_first_crossing(self):
        assert derive_eligibility(self.log(), 75) == {"a": 2.0, "c": 0.0}

    def test_unsorted(self):
        log = self.log()
        log.loc[4, "time"] = 0.5
        with pytest.raises(DataError):
            derive_eligibility(log, 75)

    def test_split_logs_merge_to_same_answer(self):
        log = self.log()
        parts = [log.iloc[[4, 0, 5]], log.iloc[[2, 3, 1]]]
        merged = merge_reputation_logs(parts)
        assert derive_eligibility(merged, 75) == derive_eligibility(log, 75)

    def test_parse_reputation_file(self, tmp_path):
        path = write(tmp_path / "rep.tsv", "user_id\ttime\treputation", "a\t1\t10", "a\t2\t80")
        assert derive_eligibility(parse_reputation_file(path), 75) == {"a": 2.0}

    def test_records_from_actions(self):
        actions = pd.DataFrame({"user_id": ["a", "a", "a", "c", "z"], "time": [1.0, 5.0, 3.0, 0.0, 2.0]})
        records = eligibility_records({"a": 2.0, "c": 0.0, "b": 4.0}, actions)
        assert records == [EventRecord("a", 2.0, 3.0), EventRecord("b", 4.0), EventRecord("c", 0.0, 0.0)]

    def test_records_without_actions_are_censored(self):
        records = eligibility_records({"a": 2.0})
        assert records == [EventRecord("a", 2.0)]

    def test_parse_actions_file(self, tmp_path):
        path = write(tmp_path / "actions.tsv", "user_id\ttime", "a\t3", "a\t1")
        frame = parse_actions_file(path)
        assert frame["time"].tolist() == [3.0, 1.0]


class TestOtherFiles:
    """Covariates, groups, tags and questions."""

    def test_covariates(self, tmp_path):
        path = write(tmp_path / "cov.tsv", "user_id\tage\tposts", "u1\t30\tNA", "u2\tNA\t4")
        frame = parse_covariates_file(path)
        assert list(frame.columns) == ["age", "posts"]
        assert frame.loc["u1", "age"] == 30.0
        assert math.isnan(frame.loc["u1", "posts"])
        assert math.isnan(frame.loc["u2", "age"])

    def test_covariates_bad_cell(self, tmp_path):
        path = write(tmp_path / "cov.tsv", "user_id\tage", "u1\t30", "u2\told")
        with pytest.raises(DataError) as info:
            parse_covariates_file(path)
        assert (info.value.line, info.value.column) == (3, "age")

    def test_groups(self, tmp_path):
        path = write(tmp_path / "groups.tsv", "user_id\tgroup", "u1\tnew", "u2\told")
        assert parse_groups_file(path).to_dict() == {"u1": "new", "u2": "old"}

    def test_tags(self, tmp_path):
        path = write(tmp_path / "tags.tsv", "tag_id\tpopularity\tfirst_use\twiki", "python\t900\t0\t50", "rare\t3\t10\t")
        python, rare = parse_tags_file(path)
        assert (python.tag_id, python.popularity, python.first_use, python.wiki_time) == ("python", 900.0, 0.0, 50.0)
        assert rare.wiki_time is CENSORED

    def test_questions(self, tmp_path):
        path = write(
            tmp_path / "q.tsv",
            "question_id\task\tbounty\tofferer\tfirst_answer\tanswers_before_bounty",
            "q1\t0\t5\t0\t1\t2",
            "q2\t3\t\t\t\t",
            "q3\t4\t9\t1\t\t0",
        )
        q1, q2, q3 = parse_questions_file(path)
        assert q1.offerer == ASKER and q1.answers_before_bounty == 2
        assert q2.bounty_time is CENSORED and q2.first_answer_time is CENSORED and q2.offerer is None
        assert q3.offerer == OTHER and q3.first_answer_time is CENSORED

    def test_questions_without_optional_column(self, tmp_path):
        path = write(tmp_path / "q.tsv", "question_id\task\tbounty\tofferer\tfirst_answer", "q1\t0\t5\t0\t1")
        (q1,) = parse_questions_file(path)
        assert q1.answers_before_bounty is None
        assert q1.early_answers is None and q1.later_answers is None

    def test_questions_answer_counts(self, tmp_path, caplog):
        path = write(
            tmp_path / "q.tsv",
            "question_id\task\tbounty\tofferer\tfirst_answer\tearly_answers\tlater_answers",
            "q1\t0\t2.5\t1\t1\t2\t4",
            "q2\t3\t\t\t\t0\t",
        )
        with caplog.at_level(logging.WARNING):
            q1, q2 = parse_questions_file(path)
        assert (q1.early_answers, q1.later_answers) == (2, 4)
        assert (q2.early_answers, q2.later_answers) == (0, None)
        assert "ignoring extra" not in caplog.text

    @pytest.mark.parametrize("cell", ["-1", "1.5", "inf"])
    def test_questions_bad_answer_count(self, tmp_path, cell):
        path = write(
            tmp_path / "q.tsv",
            "question_id\task\tbounty\tofferer\tfirst_answer\tearly_answers",
            f"q1\t0\t\t\t\t{cell}",
        )
        with pytest.raises(DataError) as info:
            parse_questions_file(path)
        assert (info.value.line, info.value.column) == (2, "early_answers")


class TestConfigFile:
    """Flat key=value study configuration."""

    def test_load(self, tmp_path):
        path = write(tmp_path / "study.cfg", "# badge study", "tau = 180", "horizon=360  # days", "", "model=robust")
        values = load_config_file(path)
        assert values == {"tau": "180", "horizon": "360", "model": "robust"}
        config = StudyConfig.from_mapping(values)
        assert config.tau == 180.0 and config.horizon == 360.0

    def test_missing_equals(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config_file(write(tmp_path / "bad.cfg", "tau 180"))

    def test_empty_key(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config_file(write(tmp_path / "bad.cfg", "=180"))

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config_file(tmp_path / "absent.cfg")

    def test_unknown_key(self, tmp_path):
        values = load_config_file(write(tmp_path / "study.cfg", "tau=1", "horizon=2", "colour=red"))
        with pytest.raises(ConfigError):
            StudyConfig.from_mapping(values)
