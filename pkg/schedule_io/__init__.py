from .corpus_io import (
    AlphabetMismatchError,
    Corpus,
    CorpusEOFError,
    CorpusFormatError,
    CorpusVersionError,
    read_corpus,
    read_diaries,
    read_schedules,
    write_corpus,
)
from .checkpoint import (
    CheckpointError,
    CheckpointVersionError,
    ChecksumError,
    KindMismatchError,
    load_checkpoint,
    save_checkpoint,
)
from .synthetic import (
    PersonaCell,
    SyntheticPersonaSpec,
    default_persona_cells,
    expected_workday_hamming,
    make_synthetic_corpus,
    shift_pmf,
)
from .survey_adapter import EpisodeColumns, episodes_to_steps, week_from_clock_days
