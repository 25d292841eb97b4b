"""
Domain types for weekly mobility schedules and at-home activity diaries.

A week is 1008 ten-minute steps starting Monday 00:00. A diary day is 144
steps starting at 04:00. State labels are configuration driven; the defaults
below are placeholders for the survey legends, which are not machine readable.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

logger = logging.getLogger(__name__)

STEPS_PER_DAY = 144
DAYS_PER_WEEK = 7
STEPS_PER_WEEK = STEPS_PER_DAY * DAYS_PER_WEEK
RESOLUTION_MINUTES = 10
DIARY_ORIGIN_STEP = 24  # 04:00
MAX_DIARY_DAYS = 3
N_AGE_CLASSES = 7
N_OCCUPATION_CLASSES = 7

AT_HOME_LABEL = "at home"
DRIVING_CAR_LABEL = "driving car"

DEFAULT_MOBILITY_LABELS = (
    AT_HOME_LABEL,
    DRIVING_CAR_LABEL,
    "work/education",
    "shopping/errands",
    "leisure/other place",
    "on the way (non-car)",
)

DEFAULT_ACTIVITY_LABELS = (
    "sleeping",
    "personal hygiene",
    "eating",
    "cooking",
    "dishwashing/cleaning",
    "laundry/ironing",
    "TV/media",
    "computer/ICT",
    "hobbies/other",
    "resting/relaxing",
)

N_MOBILITY_STATES = len(DEFAULT_MOBILITY_LABELS)
N_ACTIVITIES = len(DEFAULT_ACTIVITY_LABELS)
N_ACTIVITY_STATES = N_ACTIVITIES + N_MOBILITY_STATES - 1


@dataclass(frozen=True)
class StateAlphabet:
    """
    Ordered set of categorical states. Codes are the positions in ``labels``.

    :param name: text label of the alphabet
    :param labels: state labels, code ``i`` is ``labels[i]``
    :param kind: ``"mobility"`` or ``"activity"``
    """

    name: str
    labels: Tuple[str, ...]
    kind: str

    def __post_init__(self):
        object.__setattr__(self, "labels", tuple(self.labels))
        if self.kind not in ("mobility", "activity"):
            raise ValueError(f"kind must be 'mobility' or 'activity', got {self.kind!r}")
        if len(set(self.labels)) != len(self.labels):
            raise ValueError(f"alphabet {self.name!r} has duplicate labels")
        if self.kind == "mobility":
            if len(self.labels) != N_MOBILITY_STATES:
                raise ValueError(
                    f"mobility alphabet must have {N_MOBILITY_STATES} states, "
                    f"got {len(self.labels)}"
                )
            for required in (AT_HOME_LABEL, DRIVING_CAR_LABEL):
                if required not in self.labels:
                    raise ValueError(f"mobility alphabet must contain {required!r}")
        elif len(self.labels) != N_ACTIVITY_STATES:
            raise ValueError(
                f"activity alphabet must have {N_ACTIVITY_STATES} states "
                f"({N_ACTIVITIES} activities + {N_MOBILITY_STATES - 1} away states), "
                f"got {len(self.labels)}"
            )

    @property
    def size(self) -> int:
        return len(self.labels)

    @property
    def states(self) -> List[Tuple[int, str]]:
        return list(enumerate(self.labels))

    def code_of(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise ValueError(f"unknown state {label!r} in alphabet {self.name!r}") from None

    def to_dict(self) -> dict:
        return {"name": self.name, "labels": list(self.labels), "kind": self.kind}

    @classmethod
    def from_dict(cls, data: dict) -> "StateAlphabet":
        return cls(name=data["name"], labels=tuple(data["labels"]), kind=data["kind"])


def mobility_alphabet(labels: Optional[Sequence[str]] = None) -> StateAlphabet:
    """Mobility alphabet of six states; ``labels`` overrides the defaults."""
    return StateAlphabet("mobility", tuple(labels or DEFAULT_MOBILITY_LABELS), "mobility")


def activity_alphabet(
    activity_labels: Optional[Sequence[str]] = None,
    mobility: Optional[StateAlphabet] = None,
) -> StateAlphabet:
    """
    Activity alphabet: the ten at-home activities (codes 0..9) followed by the
    five non-home mobility states in mobility-code order (codes 10..14).
    """
    mobility = mobility or mobility_alphabet()
    activities = tuple(activity_labels or DEFAULT_ACTIVITY_LABELS)
    if len(activities) != N_ACTIVITIES:
        raise ValueError(f"expected {N_ACTIVITIES} activity labels, got {len(activities)}")
    away = tuple(label for label in mobility.labels if label != AT_HOME_LABEL)
    return StateAlphabet("activity", activities + away, "activity")


def home_code(alphabet: StateAlphabet) -> int:
    return alphabet.code_of(AT_HOME_LABEL)


def mobility_to_activity_code(codes, mobility: Optional[StateAlphabet] = None) -> np.ndarray:
    """
    Map non-home mobility codes onto the activity alphabet. Home entries map
    to -1 since their activity is unknown.
    """
    mobility = mobility or mobility_alphabet()
    home = home_code(mobility)
    codes = np.asarray(codes, dtype=np.int64)
    table = np.full(mobility.size, -1, dtype=np.int64)
    away = [c for c in range(mobility.size) if c != home]
    table[away] = N_ACTIVITIES + np.arange(len(away))
    return table[codes]


def activity_to_mobility_code(codes, mobility: Optional[StateAlphabet] = None) -> np.ndarray:
    """Collapse activity codes back to mobility codes (activities -> at home)."""
    mobility = mobility or mobility_alphabet()
    home = home_code(mobility)
    away = np.array([c for c in range(mobility.size) if c != home], dtype=np.int64)
    table = np.concatenate([np.full(N_ACTIVITIES, home, dtype=np.int64), away])
    return table[np.asarray(codes, dtype=np.int64)]


@dataclass(frozen=True)
class PersonAttributes:
    """Socio-demographic attributes: seven age and seven occupation classes."""

    age_class: int
    occupation_class: int
    person_id: str = ""

    def __post_init__(self):
        if not 0 <= int(self.age_class) < N_AGE_CLASSES:
            raise ValueError(f"age_class must be in 0..{N_AGE_CLASSES - 1}, got {self.age_class}")
        if not 0 <= int(self.occupation_class) < N_OCCUPATION_CLASSES:
            raise ValueError(
                f"occupation_class must be in 0..{N_OCCUPATION_CLASSES - 1}, "
                f"got {self.occupation_class}"
            )
        object.__setattr__(self, "age_class", int(self.age_class))
        object.__setattr__(self, "occupation_class", int(self.occupation_class))
        object.__setattr__(self, "person_id", str(self.person_id))


def _frozen_codes(states) -> np.ndarray:
    arr = np.array(states, dtype=np.int64).reshape(-1)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class WeeklySchedule:
    """A week of 1008 state codes, Monday 00:00 origin."""

    states: np.ndarray
    attributes: PersonAttributes
    alphabet: StateAlphabet = field(default_factory=mobility_alphabet)

    def __post_init__(self):
        object.__setattr__(self, "states", _frozen_codes(self.states))

    def __eq__(self, other):
        if not isinstance(other, WeeklySchedule):
            return NotImplemented
        return (
            self.attributes == other.attributes
            and self.alphabet == other.alphabet
            and np.array_equal(self.states, other.states)
        )

    @property
    def person_id(self) -> str:
        return self.attributes.person_id


@dataclass(frozen=True, eq=False)
class DiaryDay:
    """One diary day: 144 steps starting at 04:00 of ``weekday``."""

    weekday: int
    states: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "weekday", int(self.weekday))
        object.__setattr__(self, "states", _frozen_codes(self.states))

    def __eq__(self, other):
        if not isinstance(other, DiaryDay):
            return NotImplemented
        return self.weekday == other.weekday and np.array_equal(self.states, other.states)


@dataclass(frozen=True, eq=False)
class DiarySample:
    """Up to three diary days of one person, kept in weekday order."""

    days: Tuple[DiaryDay, ...]
    attributes: PersonAttributes
    alphabet: StateAlphabet = field(default_factory=activity_alphabet)

    def __post_init__(self):
        days = tuple(sorted(self.days, key=lambda d: d.weekday))
        object.__setattr__(self, "days", days)

    def __eq__(self, other):
        if not isinstance(other, DiarySample):
            return NotImplemented
        return (
            self.attributes == other.attributes
            and self.alphabet == other.alphabet
            and len(self.days) == len(other.days)
            and all(a == b for a, b in zip(self.days, other.days))
        )

    @property
    def person_id(self) -> str:
        return self.attributes.person_id

    @property
    def weekdays(self) -> Tuple[int, ...]:
        return tuple(d.weekday for d in self.days)


def weekday_of(step: int) -> int:
    """Weekday (0 = Monday) of a week step in 0..1007."""
    step = int(step)
    if not 0 <= step < STEPS_PER_WEEK:
        raise ValueError(f"step must be in 0..{STEPS_PER_WEEK - 1}, got {step}")
    return step // STEPS_PER_DAY


def week_weekdays() -> np.ndarray:
    """Weekday index for every step of a week."""
    return np.arange(STEPS_PER_WEEK) // STEPS_PER_DAY


def validate_schedule(schedule: WeeklySchedule) -> List[str]:
    """
    Return every invariant violation of ``schedule``; an empty list means ok.
    """
    violations = []
    states = np.asarray(schedule.states)
    if states.shape != (STEPS_PER_WEEK,):
        violations.append(f"length: expected {STEPS_PER_WEEK} states, got {states.size}")
    if states.size:
        bad = np.flatnonzero((states < 0) | (states >= schedule.alphabet.size))
        if bad.size:
            violations.append(
                f"code range: {bad.size} codes outside 0..{schedule.alphabet.size - 1} "
                f"(first at step {bad[0]}: {states[bad[0]]})"
            )
    return violations


def validate_diary(sample: DiarySample) -> List[str]:
    """Return every invariant violation of a diary sample."""
    violations = []
    if not 1 <= len(sample.days) <= MAX_DIARY_DAYS:
        violations.append(f"day count: expected 1..{MAX_DIARY_DAYS} days, got {len(sample.days)}")
    weekdays = [d.weekday for d in sample.days]
    if len(set(weekdays)) != len(weekdays):
        violations.append(f"weekdays: duplicate weekdays {weekdays}")
    for day in sample.days:
        if not 0 <= day.weekday < DAYS_PER_WEEK:
            violations.append(f"weekday: {day.weekday} outside 0..6")
        if day.states.shape != (STEPS_PER_DAY,):
            violations.append(
                f"length: day {day.weekday} has {day.states.size} states, expected {STEPS_PER_DAY}"
            )
        bad = (day.states < 0) | (day.states >= sample.alphabet.size)
        if np.any(bad):
            violations.append(f"code range: day {day.weekday} has codes outside 0..{sample.alphabet.size - 1}")
    return violations


def schedules_to_array(schedules: Sequence[WeeklySchedule]) -> np.ndarray:
    """Stack schedules into an (N, 1008) integer array."""
    if len(schedules) == 0:
        return np.zeros((0, STEPS_PER_WEEK), dtype=np.int64)
    return np.stack([np.asarray(s.states, dtype=np.int64) for s in schedules])


def attributes_to_arrays(attributes: Sequence[PersonAttributes]) -> Tuple[np.ndarray, np.ndarray]:
    ages = np.array([a.age_class for a in attributes], dtype=np.int64)
    occupations = np.array([a.occupation_class for a in attributes], dtype=np.int64)
    return ages, occupations


def diary_days_to_array(samples: Sequence[DiarySample]) -> np.ndarray:
    """All diary days of all samples as an (N_days, 144) integer array."""
    days = [d.states for s in samples for d in s.days]
    if not days:
        return np.zeros((0, STEPS_PER_DAY), dtype=np.int64)
    return np.stack(days).astype(np.int64)


def group_by_person(items: Sequence) -> Dict[str, List]:
    """Group schedules or diary samples by person id, keeping input order."""
    groups: Dict[str, List] = {}
    for item in items:
        groups.setdefault(item.person_id, []).append(item)
    return groups


def shared_alphabet(items: Sequence) -> StateAlphabet:
    """The alphabet every schedule or diary sample in ``items`` uses."""
    if len(items) == 0:
        raise ValueError("corpus is empty")
    alphabet = items[0].alphabet
    for item in items:
        if item.alphabet != alphabet:
            raise ValueError(
                f"corpus mixes alphabets: person {item.person_id!r} uses {list(item.alphabet.labels)}, "
                f"expected {list(alphabet.labels)}"
            )
    return alphabet


def recode_schedule(schedule: WeeklySchedule, alphabet: StateAlphabet) -> WeeklySchedule:
    """Express ``schedule`` in ``alphabet`` by label; both must hold the same labels."""
    if schedule.alphabet == alphabet:
        return schedule
    if schedule.alphabet.kind != alphabet.kind or set(schedule.alphabet.labels) != set(alphabet.labels):
        raise ValueError(
            f"cannot recode person {schedule.person_id!r}: labels {list(schedule.alphabet.labels)} "
            f"do not match {list(alphabet.labels)}"
        )
    table = np.array([alphabet.code_of(label) for label in schedule.alphabet.labels], dtype=np.int64)
    return WeeklySchedule(table[schedule.states], schedule.attributes, alphabet)
