from .training import ModelConfig, ModelStateError, NumericalError, TrainingConfig, TrainReport
from .sampling import reference_picks, sample_categorical, sequence_rngs
from .generator import (
    GeneratorModel,
    evaluate_generator,
    generate,
    generate_for_attributes,
    next_step_logits,
    paired_weeks,
    teacher_forced_loss,
    train_generator,
)
from .imputer import (
    PAD,
    PLACEHOLDER,
    ImputerModel,
    diary_batch,
    evaluate_imputer,
    impute,
    impute_batch,
    impute_diaries,
    paired_days,
    reveal_inputs,
    scored_loss,
    synthesize_activity_weeks,
    train_imputer,
)
from .markov import MarkovChain, MarkovModel, fit_markov, sample_markov
