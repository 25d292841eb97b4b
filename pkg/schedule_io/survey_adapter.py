"""
Episode tables to fixed-resolution step sequences.

Survey records list episodes as (person, start, end, state) with times in
minutes. Time-use diaries start their day at 04:00, so clock times are taken
relative to a day origin and wrapped into the 24 hour window. The column
mapping is configurable; it has not been checked against the restricted
survey files.
"""

import logging
from dataclasses import dataclass
from typing import Dict, Mapping, Optional

import numpy as np
import pandas as pd

from schedule_domain import DIARY_ORIGIN_STEP, RESOLUTION_MINUTES, STEPS_PER_DAY

logger = logging.getLogger(__name__)

MINUTES_PER_DAY = 24 * 60
DIARY_ORIGIN_MINUTES = DIARY_ORIGIN_STEP * RESOLUTION_MINUTES


@dataclass(frozen=True)
class EpisodeColumns:
    """Names of the episode table columns."""

    person: str = "person_id"
    start: str = "start_minute"
    end: str = "end_minute"
    state: str = "state"


def episodes_to_steps(
    episodes: pd.DataFrame,
    state_codes: Mapping,
    columns: EpisodeColumns = EpisodeColumns(),
    origin_minutes: int = DIARY_ORIGIN_MINUTES,
    resolution: int = RESOLUTION_MINUTES,
    fill: Optional[int] = None,
) -> Dict[str, np.ndarray]:
    """
    Convert one day of episodes per person into a step sequence.

    Each step takes the state of the episode covering the step's first
    minute. Clock minutes are shifted by ``origin_minutes`` and wrapped, so
    with the 4am origin an episode at 03:50 lands at the end of the day.

    :param episodes: one row per episode
    :param state_codes: raw survey state -> code
    :param fill: code for steps no episode covers; None makes gaps an error
    :return: person id -> int64 array of 1440 / resolution steps
    """
    if MINUTES_PER_DAY % resolution:
        raise ValueError(f"resolution must divide {MINUTES_PER_DAY}, got {resolution}")
    missing = [c for c in (columns.person, columns.start, columns.end, columns.state) if c not in episodes.columns]
    if missing:
        raise ValueError(f"episode table lacks columns {missing}")
    unknown = set(episodes[columns.state].unique()) - set(state_codes)
    if unknown:
        raise ValueError(f"no code for survey states {sorted(map(str, unknown))}")

    n_steps = MINUTES_PER_DAY // resolution
    frame = episodes.copy()
    frame["_start"] = (frame[columns.start] - origin_minutes) % MINUTES_PER_DAY
    duration = (frame[columns.end] - frame[columns.start]) % MINUTES_PER_DAY
    frame["_duration"] = duration.where(duration > 0, MINUTES_PER_DAY)
    frame["_code"] = frame[columns.state].map(state_codes).astype(np.int64)

    out = {}
    step_minutes = np.arange(n_steps) * resolution
    for person, group in frame.groupby(columns.person, sort=True):
        seq = np.full(n_steps, -1, dtype=np.int64)
        for start, length, code in group[["_start", "_duration", "_code"]].itertuples(index=False):
            covered = (step_minutes - start) % MINUTES_PER_DAY < length
            seq[covered] = code
        if np.any(seq < 0):
            if fill is None:
                raise ValueError(f"person {person!r}: {int(np.sum(seq < 0))} steps are not covered by any episode")
            seq[seq < 0] = fill
        out[str(person)] = seq
    logger.debug("converted episodes of %d persons to %d-step days", len(out), n_steps)
    return out


def week_from_clock_days(days: Mapping[int, np.ndarray]) -> np.ndarray:
    """
    Assemble a Monday-00:00 week from seven 00:00-origin days keyed 0..6.
    """
    if sorted(days) != list(range(7)):
        raise ValueError(f"need days 0..6, got {sorted(days)}")
    for d, seq in days.items():
        if np.asarray(seq).shape != (STEPS_PER_DAY,):
            raise ValueError(f"day {d} must have {STEPS_PER_DAY} steps")
    return np.concatenate([np.asarray(days[d], dtype=np.int64) for d in range(7)])
