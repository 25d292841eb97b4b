"""
Habit-structured synthetic corpus.

Each persona cell has a weekday and a weekend day template made of away
segments on a home background. A person's day is its template shifted
rigidly by a whole number of steps, delta = clamp(round(N(0, sigma)), -M, M),
drawn once per day, so all boundaries of a day move together. Whether the
person travels by car is drawn once per person. Diaries cut three 4am-origin
days (two weekdays, one weekend day) out of the person's week and fill the
at-home steps from a time-of-day activity profile shifted with the same day
offset.
"""

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.stats import norm

from schedule_domain import (
    DIARY_ORIGIN_STEP,
    DRIVING_CAR_LABEL,
    N_ACTIVITIES,
    STEPS_PER_DAY,
    STEPS_PER_WEEK,
    DiaryDay,
    DiarySample,
    PersonAttributes,
    StateAlphabet,
    WeeklySchedule,
    activity_alphabet,
    home_code,
    mobility_alphabet,
    mobility_to_activity_code,
)

logger = logging.getLogger(__name__)

TRAVEL = "travel"
NON_CAR_TRAVEL_LABEL = "on the way (non-car)"
WORKING_DAYS = 5

Segment = Tuple[int, int, str]
Profile = Tuple[int, int, int]

# (start, end, activity code) blocks covering the 144 steps of a 00:00 day
DEFAULT_ACTIVITY_PROFILE: Tuple[Profile, ...] = (
    (0, 40, 0),
    (40, 44, 1),
    (44, 48, 2),
    (48, 60, 4),
    (60, 66, 7),
    (66, 72, 3),
    (72, 78, 2),
    (78, 84, 5),
    (84, 102, 8),
    (102, 108, 3),
    (108, 114, 2),
    (114, 117, 4),
    (117, 132, 6),
    (132, 138, 9),
    (138, 141, 1),
    (141, 144, 0),
)


def validate_profile(profile: Sequence[Profile]) -> None:
    """Blocks must tile the 144 steps of a day with codes 0..9."""
    expected = 0
    for start, end, activity in profile:
        if start != expected or end <= start:
            raise ValueError(f"activity profile must tile 0..{STEPS_PER_DAY} without gaps, broken at {start}")
        if not 0 <= activity < N_ACTIVITIES:
            raise ValueError(f"activity code {activity} outside 0..{N_ACTIVITIES - 1}")
        expected = end
    if expected != STEPS_PER_DAY:
        raise ValueError(f"activity profile ends at {expected}, expected {STEPS_PER_DAY}")


@dataclass(frozen=True)
class PersonaCell:
    """
    :param weekday_segments: (start, end, label) away segments of Mon..Fri;
        label ``"travel"`` becomes "driving car" or non-car travel per person
    :param weekend_segments: same for Sat and Sun
    :param car_probability: share of persons travelling by car
    :param weight: relative frequency of the cell
    :param activity_profile: at-home activity blocks of this cell, None uses
        the corpus-wide profile
    """

    age_class: int
    occupation_class: int
    weekday_segments: Tuple[Segment, ...]
    weekend_segments: Tuple[Segment, ...] = ()
    car_probability: float = 0.5
    weight: float = 1.0
    activity_profile: Optional[Tuple[Profile, ...]] = None

    def validate(self, max_shift: int, labels: Sequence[str]) -> None:
        PersonAttributes(self.age_class, self.occupation_class)
        if not 0.0 <= self.car_probability <= 1.0:
            raise ValueError(f"car_probability must be in [0, 1], got {self.car_probability}")
        if self.weight <= 0:
            raise ValueError(f"weight must be positive, got {self.weight}")
        for name in ("weekday_segments", "weekend_segments"):
            previous_end = max_shift
            for start, end, label in getattr(self, name):
                if start >= end:
                    raise ValueError(f"{name}: segment ({start}, {end}) is empty")
                if start < previous_end:
                    raise ValueError(
                        f"{name}: segment starting at {start} overlaps the previous one or "
                        f"lies within {max_shift} steps of midnight"
                    )
                if label != TRAVEL and label not in labels:
                    raise ValueError(f"{name}: unknown state {label!r}")
                previous_end = end
            if previous_end > STEPS_PER_DAY - max_shift:
                raise ValueError(f"{name}: last segment ends within {max_shift} steps of midnight")
        if self.activity_profile is not None:
            validate_profile(self.activity_profile)


def _commute(leave: int, arrive_home: int, place: str) -> Tuple[Segment, ...]:
    return ((leave, leave + 3, TRAVEL), (leave + 3, arrive_home - 3, place), (arrive_home - 3, arrive_home, TRAVEL))


def default_persona_cells() -> Tuple[PersonaCell, ...]:
    return (
        PersonaCell(
            age_class=2,
            occupation_class=0,
            weekday_segments=_commute(45, 105, "work/education") + ((105, 111, "shopping/errands"), (111, 114, TRAVEL)),
            weekend_segments=_commute(60, 78, "shopping/errands") + _commute(96, 120, "leisure/other place"),
            car_probability=0.7,
        ),
        PersonaCell(
            age_class=0,
            occupation_class=3,
            weekday_segments=_commute(46, 87, "work/education") + _commute(96, 114, "leisure/other place"),
            weekend_segments=_commute(84, 120, "leisure/other place"),
            car_probability=0.2,
        ),
        PersonaCell(
            age_class=3,
            occupation_class=1,
            weekday_segments=_commute(50, 81, "work/education"),
            weekend_segments=_commute(63, 75, "shopping/errands"),
            car_probability=0.5,
        ),
        PersonaCell(
            age_class=6,
            occupation_class=6,
            weekday_segments=_commute(60, 75, "shopping/errands") + _commute(84, 102, "leisure/other place"),
            weekend_segments=_commute(90, 108, "leisure/other place"),
            car_probability=0.6,
        ),
    )


@dataclass(frozen=True)
class SyntheticPersonaSpec:
    """
    :param cells: persona cells
    :param sigma: standard deviation of the daily shift in steps
    :param max_shift: clamp of the daily shift
    :param activity_profile: (start, end, activity) blocks over a 00:00 day,
        used by cells without a profile of their own
    :param deterministic_activities: ignore the daily shift for activities,
        making the at-home activity a fixed function of the time of day
    """

    cells: Tuple[PersonaCell, ...] = field(default_factory=default_persona_cells)
    sigma: float = 6.0
    max_shift: int = 18
    activity_profile: Tuple[Profile, ...] = DEFAULT_ACTIVITY_PROFILE
    deterministic_activities: bool = False
    mobility_labels: Optional[Tuple[str, ...]] = None
    activity_labels: Optional[Tuple[str, ...]] = None

    def __post_init__(self):
        self.validate()

    @property
    def mobility(self) -> StateAlphabet:
        return mobility_alphabet(self.mobility_labels)

    @property
    def activities(self) -> StateAlphabet:
        return activity_alphabet(self.activity_labels, self.mobility)

    def profile_for(self, cell: PersonaCell) -> Tuple[Profile, ...]:
        return self.activity_profile if cell.activity_profile is None else cell.activity_profile

    def validate(self) -> None:
        if not self.cells:
            raise ValueError("at least one persona cell is required")
        if self.sigma < 0:
            raise ValueError(f"sigma must be >= 0, got {self.sigma}")
        if self.max_shift < 0:
            raise ValueError(f"max_shift must be >= 0, got {self.max_shift}")
        labels = self.mobility.labels
        if NON_CAR_TRAVEL_LABEL not in labels:
            raise ValueError(f"mobility alphabet must contain {NON_CAR_TRAVEL_LABEL!r}")
        for cell in self.cells:
            cell.validate(self.max_shift, labels)
        validate_profile(self.activity_profile)
        if self.activity_labels is not None and len(self.activity_labels) != N_ACTIVITIES:
            raise ValueError(f"expected {N_ACTIVITIES} activity labels, got {len(self.activity_labels)}")


def _template(segments: Sequence[Segment], mobility: StateAlphabet, car: bool) -> np.ndarray:
    day = np.full(STEPS_PER_DAY, home_code(mobility), dtype=np.int64)
    travel = mobility.code_of(DRIVING_CAR_LABEL if car else NON_CAR_TRAVEL_LABEL)
    for start, end, label in segments:
        day[start:end] = travel if label == TRAVEL else mobility.code_of(label)
    return day


def _profile_array(profile) -> np.ndarray:
    out = np.empty(STEPS_PER_DAY, dtype=np.int64)
    for start, end, activity in profile:
        out[start:end] = activity
    return out


def shift_pmf(sigma: float, max_shift: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    Distribution of delta = clamp(round(N(0, sigma)), -M, M).

    :return: (values -M..M, probabilities)
    """
    values = np.arange(-max_shift, max_shift + 1)
    if sigma == 0:
        return values, (values == 0).astype(np.float64)
    upper = norm.cdf((values + 0.5) / sigma)
    lower = norm.cdf((values - 0.5) / sigma)
    upper[-1], lower[0] = 1.0, 0.0
    return values, upper - lower


def day_offsets(rng: np.random.Generator, size, sigma: float, max_shift: int) -> np.ndarray:
    if sigma == 0:
        return np.zeros(size, dtype=np.int64)
    return np.clip(np.rint(rng.normal(0.0, sigma, size=size)), -max_shift, max_shift).astype(np.int64)


def expected_workday_hamming(cell: PersonaCell, sigma: float, max_shift: int = 18, mobility=None) -> float:
    """
    Mean Hamming distance between two working days of one person.

    The two days are the same template shifted by delta_1 and delta_2, so
    their distance is f(delta_1 - delta_2), f(d) = #{s : x(s) != x(s + d)}.
    The expectation sums f over the distribution of the difference. When
    every segment is at least 2M steps long f(d) = boundaries * |d|.
    """
    mobility = mobility or mobility_alphabet()
    template = _template(cell.weekday_segments, mobility, car=True)
    values, probs = shift_pmf(sigma, max_shift)
    diffs = np.subtract.outer(values, values).ravel()
    weights = np.multiply.outer(probs, probs).ravel()
    padded = np.concatenate([np.full(max_shift * 2, template[0]), template, np.full(max_shift * 2, template[-1])])
    lag_cost = {}
    for d in np.unique(np.abs(diffs)):
        lag_cost[d] = int(np.sum(padded[: padded.size - d] != padded[d:])) if d else 0
    return float(sum(w * lag_cost[abs(d)] for d, w in zip(diffs, weights)))


def _person_week(cell: PersonaCell, mobility, car: bool, offsets: np.ndarray) -> np.ndarray:
    weekday = _template(cell.weekday_segments, mobility, car)
    weekend = _template(cell.weekend_segments, mobility, car)
    days = []
    for d in range(7):
        base = weekday if d < WORKING_DAYS else weekend
        # templates are home within max_shift of midnight, so rolling is a shift
        days.append(np.roll(base, offsets[d]))
    return np.concatenate(days)


def _diary_weekdays(rng: np.random.Generator) -> Tuple[int, int, int]:
    first, second = rng.choice(WORKING_DAYS, size=2, replace=False)
    weekend = WORKING_DAYS + rng.integers(2)
    return tuple(sorted((int(first), int(second), int(weekend))))


def make_synthetic_corpus(
    spec: SyntheticPersonaSpec, n_persons: int, seed: int
) -> Tuple[List[WeeklySchedule], List[DiarySample]]:
    """
    Draw ``n_persons`` persons. Returns their mobility weeks and a diary
    sample of three days per person, deterministic per seed.
    """
    if n_persons < 1:
        raise ValueError(f"n_persons must be positive, got {n_persons}")
    mobility = spec.mobility
    activities = spec.activities
    profiles = [_profile_array(spec.profile_for(cell)) for cell in spec.cells]
    weights = np.array([c.weight for c in spec.cells], dtype=np.float64)
    rng = np.random.default_rng(int(seed))
    cell_index = rng.choice(len(spec.cells), size=n_persons, p=weights / weights.sum())
    width = len(str(n_persons))

    schedules, diaries = [], []
    for i in range(n_persons):
        cell = spec.cells[cell_index[i]]
        profile = profiles[cell_index[i]]
        attrs = PersonAttributes(cell.age_class, cell.occupation_class, f"p{i:0{width}d}")
        car = bool(rng.random() < cell.car_probability)
        offsets = day_offsets(rng, 7, spec.sigma, spec.max_shift)
        week = _person_week(cell, mobility, car, offsets)
        schedules.append(WeeklySchedule(week, attrs, mobility))

        days = []
        for weekday in _diary_weekdays(rng):
            steps = (weekday * STEPS_PER_DAY + DIARY_ORIGIN_STEP + np.arange(STEPS_PER_DAY)) % STEPS_PER_WEEK
            codes = mobility_to_activity_code(week[steps], mobility)
            clock = (DIARY_ORIGIN_STEP + np.arange(STEPS_PER_DAY)) % STEPS_PER_DAY
            shift = 0 if spec.deterministic_activities else offsets[weekday]
            at_home = codes < 0
            codes[at_home] = profile[(clock[at_home] - shift) % STEPS_PER_DAY]
            days.append(DiaryDay(weekday, codes))
        diaries.append(DiarySample(tuple(days), attrs, activities))
    logger.info("synthesised %d persons (sigma %.1f, %d cells)", n_persons, spec.sigma, len(spec.cells))
    return schedules, diaries
