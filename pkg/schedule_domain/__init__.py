from .domain import (
    AT_HOME_LABEL,
    DAYS_PER_WEEK,
    DEFAULT_ACTIVITY_LABELS,
    DEFAULT_MOBILITY_LABELS,
    DIARY_ORIGIN_STEP,
    DRIVING_CAR_LABEL,
    MAX_DIARY_DAYS,
    N_ACTIVITIES,
    N_ACTIVITY_STATES,
    N_AGE_CLASSES,
    N_MOBILITY_STATES,
    N_OCCUPATION_CLASSES,
    RESOLUTION_MINUTES,
    STEPS_PER_DAY,
    STEPS_PER_WEEK,
    DiaryDay,
    DiarySample,
    PersonAttributes,
    StateAlphabet,
    WeeklySchedule,
    activity_alphabet,
    activity_to_mobility_code,
    attributes_to_arrays,
    diary_days_to_array,
    group_by_person,
    home_code,
    mobility_alphabet,
    mobility_to_activity_code,
    recode_schedule,
    schedules_to_array,
    shared_alphabet,
    validate_diary,
    validate_schedule,
    week_weekdays,
    weekday_of,
)
from .split import N_FOLDS, SplitPlan, TooFewPersonsError, build_split
