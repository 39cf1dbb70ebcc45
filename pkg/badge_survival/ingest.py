"""
Ingest Module - TSV formats, eligibility derivation and the study config file

Formats (UTF-8, tab separated, header row required):

- events:      user_id  start  action            (empty action = censored)
- reputation:  user_id  time   reputation
- actions:     user_id  time                     (any number of rows per user)
- covariates:  user_id  <name1>  <name2> ...     ("NA" = missing)
- tags:        tag_id   popularity  first_use  wiki
- questions:   question_id  ask  bounty  offerer  first_answer
               [answers_before_bounty]  [early_answers  later_answers]
- config:      key=value lines, '#' comments
"""

import logging
import math
import os
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Union

import numpy as np
import pandas as pd

from .counterfactual import Question, TagEntity
from .errors import ConfigError, DataError
from .events import CENSORED, EventRecord
from .result_manager import write_text_atomic

logger = logging.getLogger(__name__)

PathLike = Union[str, os.PathLike]

EVENTS_HEADER = ("user_id", "start", "action")
REPUTATION_HEADER = ("user_id", "time", "reputation")
ACTIONS_HEADER = ("user_id", "time")
TAGS_HEADER = ("tag_id", "popularity", "first_use", "wiki")
QUESTIONS_HEADER = ("question_id", "ask", "bounty", "offerer", "first_answer")
QUESTIONS_OPTIONAL = ("answers_before_bounty", "early_answers", "later_answers")


def _read_tsv(path: PathLike, expected: Sequence[str], optional: Optional[Sequence[str]] = ()) -> pd.DataFrame:
    """
    Read a TSV as strings and check that the header starts with `expected`

    Columns beyond `expected` that are not listed in `optional` are ignored
    with a warning; optional=None accepts any extra column.
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f"file not found: {path}")
    try:
        frame = pd.read_csv(path, sep="\t", dtype=str, keep_default_na=False, na_filter=False,
                            encoding="utf-8")
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc

    header = tuple(frame.columns)
    if header[:len(expected)] != tuple(expected):
        wanted = "\t".join(expected)
        raise DataError(f"{path.name}: header must start with {wanted!r}, got {header!r}", line=1)
    extra = [c for c in header[len(expected):] if optional is not None and c not in optional]
    if extra:
        logger.warning("%s: ignoring extra column(s) %s", path.name, ", ".join(extra))
    return frame


def _numeric(frame: pd.DataFrame, column: str, allow_empty: bool = False) -> pd.Series:
    """Parse one column as float; empty or missing cells become NaN when allowed"""
    # short rows leave trailing cells NaN even with na_filter off
    raw = frame[column].fillna("").str.strip()
    empty = raw == ""
    if not allow_empty and empty.any():
        row = int(np.flatnonzero(empty.to_numpy())[0])
        raise DataError("missing field", line=row + 2, column=column)
    values = pd.to_numeric(raw.where(~empty, None), errors="coerce")
    bad = values.isna() & ~empty
    if bad.any():
        row = int(np.flatnonzero(bad.to_numpy())[0])
        raise DataError(f"cannot parse {raw.iloc[row]!r} as a number", line=row + 2, column=column)
    return values.astype(float)


def parse_events_file(path: PathLike) -> List[EventRecord]:
    """
    Parse an events TSV

    Args:
        path: file with header user_id, start, action

    Returns:
        One EventRecord per row; empty action means CENSORED
    """
    frame = _read_tsv(path, EVENTS_HEADER)
    start = _numeric(frame, "start")
    action = _numeric(frame, "action", allow_empty=True)
    duplicated = frame["user_id"].duplicated()
    if duplicated.any():
        row = int(np.flatnonzero(duplicated.to_numpy())[0])
        raise DataError(f"duplicate user_id {frame['user_id'].iloc[row]!r}", line=row + 2, column="user_id")
    return [
        EventRecord(uid, float(s), CENSORED if math.isnan(t) else float(t))
        for uid, s, t in zip(frame["user_id"], start, action)
    ]


def _fmt(value: float) -> str:
    return repr(float(value))


def write_events_file(records: Iterable[EventRecord], path: PathLike) -> None:
    """Write records as an events TSV; times keep full float precision"""
    lines = ["\t".join(EVENTS_HEADER)]
    for r in records:
        action = "" if r.censored else _fmt(r.action_time)
        lines.append(f"{r.user_id}\t{_fmt(r.start_time)}\t{action}")
    write_text_atomic(path, "\n".join(lines) + "\n")


def parse_reputation_file(path: PathLike) -> pd.DataFrame:
    """Reputation log as a DataFrame with columns user_id, time, reputation"""
    frame = _read_tsv(path, REPUTATION_HEADER)
    return pd.DataFrame({
        "user_id": frame["user_id"],
        "time": _numeric(frame, "time"),
        "reputation": _numeric(frame, "reputation"),
    })


def merge_reputation_logs(frames: Sequence[pd.DataFrame]) -> pd.DataFrame:
    """Concatenate partial logs and sort them per user by time"""
    merged = pd.concat(list(frames), ignore_index=True)
    return merged.sort_values(["user_id", "time"], kind="mergesort").reset_index(drop=True)


def derive_eligibility(log: pd.DataFrame, threshold: float) -> Dict[Any, float]:
    """
    First time each user's reputation reaches the threshold

    Args:
        log: columns user_id, time, reputation, sorted by time within each user
        threshold: required reputation (e.g. 75 to offer bounties)

    Returns:
        user_id -> start time; users who never reach the threshold are absent
    """
    unsorted = log.groupby("user_id", sort=False)["time"].apply(lambda t: not t.is_monotonic_increasing)
    if unsorted.any():
        users = list(unsorted[unsorted].index[:5])
        raise DataError(f"reputation log is not sorted by time for user(s) {users}")
    crossed = log[log["reputation"] >= threshold]
    first = crossed.groupby("user_id", sort=True)["time"].first()
    return {uid: float(t) for uid, t in first.items()}


def parse_actions_file(path: PathLike) -> pd.DataFrame:
    """Action log with columns user_id, time; a user may appear many times"""
    frame = _read_tsv(path, ACTIONS_HEADER)
    return pd.DataFrame({"user_id": frame["user_id"], "time": _numeric(frame, "time")})


def eligibility_records(starts: Dict[Any, float], actions: Optional[pd.DataFrame] = None) -> List[EventRecord]:
    """
    Event records from eligibility times and an optional action log

    A user's action time is the first logged action at or after the user
    became eligible; users without one are censored. Actions of users who
    never became eligible are ignored.

    Returns:
        Records sorted by user_id
    """
    first: Dict[Any, float] = {}
    if actions is not None and len(actions):
        joined = actions.assign(start=actions["user_id"].map(starts)).dropna(subset=["start"])
        after = joined[joined["time"] >= joined["start"]]
        first = after.groupby("user_id", sort=False)["time"].min().to_dict()
        ignored = len(actions) - len(joined)
        if ignored:
            logger.info("%d action(s) by users who never became eligible ignored", ignored)
    return [
        EventRecord(uid, float(starts[uid]), float(first[uid]) if uid in first else CENSORED)
        for uid in sorted(starts, key=str)
    ]


def parse_covariates_file(path: PathLike) -> pd.DataFrame:
    """Covariates indexed by user_id; "NA" cells become NaN"""
    frame = _read_tsv(path, ("user_id",), optional=None)
    if frame["user_id"].duplicated().any():
        raise DataError(f"{Path(path).name}: duplicate user_id")
    covariates = frame.set_index("user_id")
    parsed = {}
    for column in covariates.columns:
        raw = covariates[column].str.strip()
        values = pd.to_numeric(raw.where(raw != "NA", None), errors="coerce")
        bad = values.isna() & (raw != "NA")
        if bad.any():
            row = int(np.flatnonzero(bad.to_numpy())[0])
            raise DataError(f"cannot parse {raw.iloc[row]!r} as a number", line=row + 2, column=column)
        parsed[column] = values.astype(float)
    return pd.DataFrame(parsed, index=covariates.index)


def parse_groups_file(path: PathLike) -> pd.Series:
    """Group label per user, indexed by user_id (header user_id, group)"""
    frame = _read_tsv(path, ("user_id", "group"))
    if frame["user_id"].duplicated().any():
        raise DataError(f"{Path(path).name}: duplicate user_id")
    return frame.set_index("user_id")["group"]


def parse_tags_file(path: PathLike) -> List[TagEntity]:
    frame = _read_tsv(path, TAGS_HEADER)
    popularity = _numeric(frame, "popularity")
    first_use = _numeric(frame, "first_use")
    wiki = _numeric(frame, "wiki", allow_empty=True)
    return [
        TagEntity(tag, float(p), float(s), CENSORED if math.isnan(w) else float(w))
        for tag, p, s, w in zip(frame["tag_id"], popularity, first_use, wiki)
    ]


def parse_questions_file(path: PathLike) -> List[Question]:
    """
    Parse a questions TSV

    The answer-count columns are optional; a missing column or an empty cell
    leaves the field unset.
    """
    frame = _read_tsv(path, QUESTIONS_HEADER, optional=QUESTIONS_OPTIONAL)
    ask = _numeric(frame, "ask")
    bounty = _numeric(frame, "bounty", allow_empty=True)
    offerer = _numeric(frame, "offerer", allow_empty=True)
    answer = _numeric(frame, "first_answer", allow_empty=True)
    counts = {
        column: _numeric(frame, column, allow_empty=True) if column in frame.columns
        else pd.Series(np.nan, index=frame.index)
        for column in QUESTIONS_OPTIONAL
    }
    for column, values in counts.items():
        bad = values.notna() & (~np.isfinite(values) | (values < 0) | (values != np.floor(values)))
        if bad.any():
            row = int(np.flatnonzero(bad.to_numpy())[0])
            raise DataError(f"{values.iloc[row]:g} is not an answer count", line=row + 2, column=column)

    def opt(value: float):
        return CENSORED if math.isnan(value) else float(value)

    def count(value: float) -> Optional[int]:
        return None if math.isnan(value) else int(value)

    return [
        Question(
            qid, float(a), opt(b),
            None if math.isnan(o) else int(o),
            opt(f),
            count(before), count(early), count(later),
        )
        for qid, a, b, o, f, before, early, later in zip(
            frame["question_id"], ask, bounty, offerer, answer,
            counts["answers_before_bounty"], counts["early_answers"], counts["later_answers"],
        )
    ]


def load_config_file(path: PathLike) -> Dict[str, str]:
    """
    Read a flat key=value study config

    Returns:
        Raw string values by key, for StudyConfig.from_mapping
    """
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    values: Dict[str, str] = {}
    for number, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path.name}:{number}: expected key=value, got {line!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError(f"{path.name}:{number}: empty key")
        values[key] = value
    return values
