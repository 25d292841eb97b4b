"""
Tests for the schedule domain types, alphabets and the person split.
"""

import os
import sys

import numpy as np
import pytest

# Add the parent directory to the path so we can import our modules
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from schedule_domain import (
    AT_HOME_LABEL,
    N_ACTIVITIES,
    STEPS_PER_DAY,
    STEPS_PER_WEEK,
    DiaryDay,
    DiarySample,
    PersonAttributes,
    StateAlphabet,
    TooFewPersonsError,
    WeeklySchedule,
    activity_alphabet,
    activity_to_mobility_code,
    build_split,
    group_by_person,
    home_code,
    mobility_alphabet,
    mobility_to_activity_code,
    recode_schedule,
    schedules_to_array,
    shared_alphabet,
    validate_diary,
    validate_schedule,
    weekday_of,
)


class TestAlphabets:
    def test_default_sizes(self):
        assert mobility_alphabet().size == 6
        assert activity_alphabet().size == 15

    def test_activity_alphabet_appends_away_states_in_mobility_order(self):
        mobility = mobility_alphabet()
        activity = activity_alphabet(mobility=mobility)
        away = [label for label in mobility.labels if label != AT_HOME_LABEL]
        assert list(activity.labels[N_ACTIVITIES:]) == away

    def test_mobility_requires_home_and_car(self):
        labels = ("a", "b", "c", "d", "e", "f")
        with pytest.raises(ValueError, match="must contain"):
            mobility_alphabet(labels)

    def test_wrong_size_rejected(self):
        with pytest.raises(ValueError, match="6 states"):
            StateAlphabet("m", ("at home", "driving car"), "mobility")
        with pytest.raises(ValueError, match="expected 10 activity labels"):
            activity_alphabet(activity_labels=("x",) * 3)

    def test_duplicate_labels_rejected(self):
        with pytest.raises(ValueError, match="duplicate"):
            StateAlphabet("a", ("x",) * 15, "activity")

    def test_round_trip_dict(self):
        alphabet = activity_alphabet()
        assert StateAlphabet.from_dict(alphabet.to_dict()) == alphabet


class TestCodeMapping:
    def test_mobility_to_activity(self):
        mobility = mobility_alphabet()
        home = home_code(mobility)
        codes = np.arange(mobility.size)
        mapped = mobility_to_activity_code(codes, mobility)
        assert mapped[home] == -1
        assert sorted(mapped[codes != home].tolist()) == list(range(10, 15))

    def test_activities_collapse_to_home(self):
        mobility = mobility_alphabet()
        back = activity_to_mobility_code(np.arange(15), mobility)
        assert np.all(back[:N_ACTIVITIES] == home_code(mobility))
        away = mobility_to_activity_code(np.arange(6), mobility)
        mask = away >= 0
        np.testing.assert_array_equal(activity_to_mobility_code(away[mask], mobility), np.arange(6)[mask])


class TestRecords:
    def setup_method(self):
        self.attrs = PersonAttributes(2, 3, "p1")

    def test_attribute_ranges(self):
        with pytest.raises(ValueError, match="age_class"):
            PersonAttributes(7, 0)
        with pytest.raises(ValueError, match="occupation_class"):
            PersonAttributes(0, -1)

    def test_schedule_states_read_only(self):
        week = WeeklySchedule(np.zeros(STEPS_PER_WEEK), self.attrs)
        with pytest.raises(ValueError):
            week.states[0] = 1

    def test_validate_schedule_reports_violations(self):
        assert validate_schedule(WeeklySchedule(np.zeros(STEPS_PER_WEEK), self.attrs)) == []
        short = WeeklySchedule(np.zeros(10), self.attrs)
        assert any("length" in v for v in validate_schedule(short))
        states = np.zeros(STEPS_PER_WEEK)
        states[5] = 9
        assert any("code range" in v for v in validate_schedule(WeeklySchedule(states, self.attrs)))

    def test_diary_days_sorted_and_validated(self):
        days = (DiaryDay(5, np.zeros(STEPS_PER_DAY)), DiaryDay(1, np.zeros(STEPS_PER_DAY)))
        sample = DiarySample(days, self.attrs)
        assert sample.weekdays == (1, 5)
        assert validate_diary(sample) == []

    def test_diary_duplicate_weekday(self):
        days = (DiaryDay(2, np.zeros(STEPS_PER_DAY)), DiaryDay(2, np.zeros(STEPS_PER_DAY)))
        assert any("duplicate" in v for v in validate_diary(DiarySample(days, self.attrs)))

    def test_diary_too_many_days(self):
        days = tuple(DiaryDay(d, np.zeros(STEPS_PER_DAY)) for d in range(4))
        assert any("day count" in v for v in validate_diary(DiarySample(days, self.attrs)))

    def test_weekday_of(self):
        assert weekday_of(0) == 0
        assert weekday_of(STEPS_PER_WEEK - 1) == 6
        with pytest.raises(ValueError):
            weekday_of(STEPS_PER_WEEK)

    def test_helpers(self):
        weeks = [WeeklySchedule(np.full(STEPS_PER_WEEK, i % 6), PersonAttributes(0, 0, f"p{i % 2}")) for i in range(4)]
        assert schedules_to_array(weeks).shape == (4, STEPS_PER_WEEK)
        groups = group_by_person(weeks)
        assert list(groups) == ["p0", "p1"]
        assert len(groups["p0"]) == 2


class TestAlphabetSharing:
    def setup_method(self):
        self.reordered = mobility_alphabet(
            (
                "work/education",
                "driving car",
                AT_HOME_LABEL,
                "shopping/errands",
                "leisure/other place",
                "on the way (non-car)",
            )
        )

    def test_shared_alphabet(self):
        weeks = [
            WeeklySchedule(np.zeros(STEPS_PER_WEEK), PersonAttributes(0, 0, f"p{i}"), self.reordered) for i in range(3)
        ]
        assert shared_alphabet(weeks) == self.reordered

    def test_mixed_alphabets_rejected(self):
        weeks = [
            WeeklySchedule(np.zeros(STEPS_PER_WEEK), PersonAttributes(0, 0, "p0")),
            WeeklySchedule(np.zeros(STEPS_PER_WEEK), PersonAttributes(0, 0, "p1"), self.reordered),
        ]
        with pytest.raises(ValueError, match="mixes alphabets"):
            shared_alphabet(weeks)
        with pytest.raises(ValueError, match="empty"):
            shared_alphabet([])

    def test_recode_by_label(self):
        states = np.zeros(STEPS_PER_WEEK, dtype=np.int64)
        states[100:200] = 2  # work/education in the reordered alphabet
        states[200:210] = 1
        week = WeeklySchedule(states, PersonAttributes(1, 1, "p0"), self.reordered)
        default = mobility_alphabet()
        recoded = recode_schedule(week, default)
        assert recoded.alphabet == default
        assert recoded.attributes == week.attributes
        labels = [default.labels[c] for c in recoded.states]
        assert labels == [self.reordered.labels[c] for c in week.states]
        assert recoded.states[0] == home_code(default)
        assert recoded.states[150] == default.code_of("work/education")

    def test_recode_same_alphabet_is_identity(self):
        week = WeeklySchedule(np.zeros(STEPS_PER_WEEK), PersonAttributes(0, 0))
        assert recode_schedule(week, mobility_alphabet()) is week

    def test_recode_rejects_other_labels(self):
        other = mobility_alphabet((AT_HOME_LABEL, "driving car", "office", "shop", "park", "walking"))
        week = WeeklySchedule(np.zeros(STEPS_PER_WEEK), PersonAttributes(0, 0, "p9"), other)
        with pytest.raises(ValueError, match="cannot recode person 'p9'"):
            recode_schedule(week, mobility_alphabet())


class TestSplit:
    def setup_method(self):
        self.ids = [f"p{i:03d}" for i in range(100)]

    def test_deterministic(self):
        assert build_split(self.ids, 7) == build_split(self.ids, 7)
        assert build_split(self.ids, 7).test_ids != build_split(self.ids, 8).test_ids

    def test_partition(self):
        plan = build_split(self.ids, 0)
        assert len(plan.test_ids) == 10
        assert set(plan.test_ids).isdisjoint(plan.fold_assignments)
        assert set(plan.test_ids) | set(plan.fold_assignments) == set(self.ids)
        sizes = [len(plan.fold_ids(f)) for f in range(9)]
        assert max(sizes) - min(sizes) <= 1

    def test_train_and_validation_disjoint(self):
        plan = build_split(self.ids, 3)
        for fold in range(9):
            assert set(plan.train_ids(fold)).isdisjoint(plan.validation_ids(fold))

    def test_too_few_persons(self):
        with pytest.raises(TooFewPersonsError, match="at least 20"):
            build_split(self.ids[:19], 0)

    def test_bad_fold(self):
        with pytest.raises(ValueError, match="fold"):
            build_split(self.ids, 0).train_ids(9)

    def test_round_trip(self):
        plan = build_split(self.ids, 11)
        from schedule_domain import SplitPlan

        assert SplitPlan.from_dict(plan.to_dict()) == plan
