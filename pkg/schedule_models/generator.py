"""
Autoregressive weekly mobility generator.

Inputs are [BOS, s0 .. s1006] under a look-ahead mask and the targets are
[s0 .. s1007]. BOS is an extra row of the state embedding table, so every
position is assembled the same way (state, weekday, age and occupation
embeddings, projection, position rows).
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from schedule_attention import (
    CausalDecodeCache,
    InputFeatureSpec,
    assemble_inputs,
    decode_step,
    encoder_forward,
    init_encoder_params,
    init_input_params,
    lookahead_mask,
)
from schedule_domain import (
    STEPS_PER_WEEK,
    PersonAttributes,
    SplitPlan,
    StateAlphabet,
    WeeklySchedule,
    attributes_to_arrays,
    mobility_alphabet,
    recode_schedule,
    schedules_to_array,
    shared_alphabet,
    validate_schedule,
    week_weekdays,
)
from schedule_numerics import Tensor, cross_entropy, parameter

from .sampling import reference_picks, sample_categorical, sequence_rngs
from .training import (
    ModelConfig,
    ModelStateError,
    TrainReport,
    accumulate_gradients,
    batches,
    frozen,
    run_training,
)

logger = logging.getLogger(__name__)

HEAD_INIT_SCALE = 0.1


@dataclass
class GeneratorModel:
    """
    :param config: encoder, embedding and training settings
    :param alphabet: mobility alphabet; the head has one logit per state
    :param params: parameter tensors keyed by name
    :param seed: training seed
    """

    KIND = "generator"

    config: ModelConfig
    alphabet: StateAlphabet = field(default_factory=mobility_alphabet)
    params: Dict[str, Tensor] = field(default_factory=dict)
    seed: int = 0
    trained: bool = False

    @property
    def bos_code(self) -> int:
        return self.alphabet.size

    @property
    def features(self) -> InputFeatureSpec:
        c = self.config
        return InputFeatureSpec(
            state_vocab=self.alphabet.size + 1,
            d_model=c.encoder.d_model,
            state_embed_dim=c.state_embed_dim,
            weekday_embed_dim=c.weekday_embed_dim,
            age_embed_dim=c.age_embed_dim,
            occupation_embed_dim=c.occupation_embed_dim,
        )

    @classmethod
    def initialise(cls, config: ModelConfig, alphabet: Optional[StateAlphabet] = None, seed: int = 0):
        alphabet = alphabet or mobility_alphabet()
        if config.encoder.max_len < STEPS_PER_WEEK:
            raise ValueError(f"encoder max_len must be >= {STEPS_PER_WEEK}, got {config.encoder.max_len}")
        model = cls(config=config, alphabet=alphabet, seed=int(seed))
        rng = np.random.default_rng([int(seed), 0])
        d = config.encoder.d_model
        model.params.update(init_input_params(model.features, rng))
        model.params.update(init_encoder_params(config.encoder, rng))
        model.params["head.w"] = parameter(rng.normal(0.0, HEAD_INIT_SCALE / np.sqrt(d), size=(d, alphabet.size)))
        model.params["head.b"] = parameter(np.zeros(alphabet.size))
        return model

    def logits(self, inputs, ages, occupations, params=None, train=False, rng=None) -> Tensor:
        """Teacher-forced logits, B x L x K, for input codes B x L."""
        params = self.params if params is None else params
        inputs = np.asarray(inputs)
        length = inputs.shape[-1]
        x = assemble_inputs(params, self.features, inputs, week_weekdays()[:length], ages, occupations)
        h = encoder_forward(x, lookahead_mask(length), self.config.encoder, params, train=train, rng=rng)
        return h @ params["head.w"] + params["head.b"]

    def shifted_inputs(self, states: np.ndarray) -> np.ndarray:
        states = np.atleast_2d(np.asarray(states, dtype=np.int64))
        bos = np.full((states.shape[0], 1), self.bos_code, dtype=np.int64)
        return np.concatenate([bos, states[:, :-1]], axis=1)

    def to_state(self) -> Tuple[dict, Dict[str, np.ndarray]]:
        meta = {
            "config": self.config.to_dict(),
            "alphabets": {"mobility": self.alphabet.to_dict()},
            "seed": self.seed,
            "trained": self.trained,
        }
        return meta, {name: p.data for name, p in self.params.items()}

    @classmethod
    def from_state(cls, meta: dict, arrays: Dict[str, np.ndarray]) -> "GeneratorModel":
        model = cls(
            config=ModelConfig.from_dict(meta["config"]),
            alphabet=StateAlphabet.from_dict(meta["alphabets"]["mobility"]),
            seed=int(meta["seed"]),
            trained=bool(meta.get("trained", True)),
        )
        model.params = {name: parameter(arr) for name, arr in arrays.items()}
        return model


def _check_corpus(corpus: Sequence[WeeklySchedule]) -> None:
    for schedule in corpus:
        violations = validate_schedule(schedule)
        if violations:
            raise ValueError(f"invalid schedule for person {schedule.person_id!r}: {violations[0]}")


def _select(corpus: Sequence[WeeklySchedule], ids) -> List[WeeklySchedule]:
    wanted = set(ids)
    return [s for s in corpus if s.person_id in wanted]


def train_generator(
    corpus: Sequence[WeeklySchedule],
    split: Optional[SplitPlan],
    fold: int,
    config: ModelConfig,
    seed: int,
    verbose: bool = False,
) -> Tuple[GeneratorModel, TrainReport]:
    """
    Teacher-forced training with Adam and early stopping on the validation fold.

    :param corpus: weekly mobility schedules
    :param split: person split; None trains on the whole corpus and validates
        on it as well
    :param fold: validation fold 0..8
    :return: (trained model, report)
    """
    _check_corpus(corpus)
    alphabet = shared_alphabet(corpus)
    if alphabet.kind != "mobility":
        raise ValueError(f"the generator trains on mobility weeks, got a {alphabet.kind} alphabet")
    if split is None:
        train, valid = list(corpus), list(corpus)
    else:
        train, valid = _select(corpus, split.train_ids(fold)), _select(corpus, split.validation_ids(fold))
    if not train:
        raise ValueError("training fold is empty")
    if not valid:
        valid = train

    model = GeneratorModel.initialise(config, alphabet=alphabet, seed=seed)
    tc = config.training
    targets = schedules_to_array(train)
    inputs = model.shifted_inputs(targets)
    ages, occupations = attributes_to_arrays([s.attributes for s in train])
    rng = np.random.default_rng([int(seed), 1])

    def micro_loss(idx) -> Tensor:
        logits = model.logits(inputs[idx], ages[idx], occupations[idx], train=True, rng=rng)
        return cross_entropy(logits.reshape(-1, model.alphabet.size), targets[idx].reshape(-1))

    def batch_step(indices, epoch) -> float:
        pieces = [(chunk, chunk.size * STEPS_PER_WEEK) for chunk in batches(indices, tc.micro_batch)]
        return accumulate_gradients(pieces, micro_loss)

    v_targets = schedules_to_array(valid)
    v_inputs = model.shifted_inputs(v_targets)
    v_ages, v_occupations = attributes_to_arrays([s.attributes for s in valid])

    def evaluate(params):
        return _teacher_forced_scores(model, params, v_inputs, v_targets, v_ages, v_occupations)

    logger.info("training generator on %d schedules (%d validation)", len(train), len(valid))
    report = run_training(model.params, len(train), batch_step, evaluate, tc, rng, verbose=verbose)
    model.trained = True
    return model, report


def _teacher_forced_scores(model, params, inputs, targets, ages, occupations) -> Tuple[float, float]:
    total_loss, correct, count = 0.0, 0, 0
    for idx in batches(np.arange(len(inputs)), model.config.training.micro_batch):
        logits = model.logits(inputs[idx], ages[idx], occupations[idx], params=params)
        flat = logits.reshape(-1, model.alphabet.size)
        n = flat.shape[0]
        total_loss += float(cross_entropy(flat, targets[idx].reshape(-1)).data) * n
        correct += int(np.sum(np.argmax(flat.data, axis=1) == targets[idx].reshape(-1)))
        count += n
    return total_loss / count, correct / count


def teacher_forced_loss(model: GeneratorModel, corpus: Sequence[WeeklySchedule]) -> Tuple[float, float]:
    """Mean cross entropy and accuracy of ``model`` on ``corpus``."""
    targets = schedules_to_array(corpus)
    if targets.shape[0] == 0:
        raise ValueError("corpus is empty")
    ages, occupations = attributes_to_arrays([s.attributes for s in corpus])
    return _teacher_forced_scores(
        model, frozen(model.params), model.shifted_inputs(targets), targets, ages, occupations
    )


def next_step_logits(model: GeneratorModel, history, attributes: PersonAttributes) -> np.ndarray:
    """Logits of the state at step len(history) given the earlier states."""
    history = np.asarray(history, dtype=np.int64).reshape(-1)
    if history.size >= STEPS_PER_WEEK:
        raise ValueError(f"history must be shorter than {STEPS_PER_WEEK} steps, got {history.size}")
    inputs = np.concatenate([[model.bos_code], history])[None, :]
    logits = model.logits(inputs, [attributes.age_class], [attributes.occupation_class], params=frozen(model.params))
    return logits.data[0, -1]


def _require_trained(model) -> None:
    if not model.trained:
        raise ModelStateError(f"{type(model).__name__} has not been trained")


def generate_for_attributes(
    model: GeneratorModel,
    attributes: Sequence[PersonAttributes],
    seed: int,
    temperature: float = 1.0,
    batch_size: int = 256,
    verbose: bool = False,
) -> List[WeeklySchedule]:
    """
    One week per attribute record. Schedule i uses the random stream
    (seed, i), so results do not depend on ``batch_size``.
    """
    _require_trained(model)
    if temperature < 0:
        raise ValueError(f"temperature must be >= 0, got {temperature}")
    params = frozen(model.params)
    weekdays = week_weekdays()
    features = model.features
    log = logger.info if verbose else logger.debug
    out: List[WeeklySchedule] = []
    for start in range(0, len(attributes), batch_size):
        chunk = list(attributes[start : start + batch_size])
        b = len(chunk)
        ages, occupations = attributes_to_arrays(chunk)
        rngs = sequence_rngs(seed, start, b)
        cache = CausalDecodeCache(model.config.encoder, b, STEPS_PER_WEEK)
        states = np.empty((b, STEPS_PER_WEEK), dtype=np.int64)
        token = np.full(b, model.bos_code, dtype=np.int64)
        for t in range(STEPS_PER_WEEK):
            x = assemble_inputs(
                params, features, token[:, None], weekdays[t : t + 1], ages, occupations, positions=[t]
            )
            h = decode_step(x.data[:, 0, :], cache, params)
            logits = h @ params["head.w"].data + params["head.b"].data
            token = sample_categorical(logits, rngs, temperature)
            states[:, t] = token
        log("generated schedules %d..%d", start, start + b - 1)
        out.extend(WeeklySchedule(states[i], chunk[i], model.alphabet) for i in range(b))
    return out


def generate(
    model: GeneratorModel, attributes: PersonAttributes, n: int, seed: int, temperature: float = 1.0
) -> List[WeeklySchedule]:
    """``n`` synthetic weeks for one attribute record."""
    if n < 1:
        raise ValueError(f"n must be positive, got {n}")
    return generate_for_attributes(model, [attributes] * n, seed, temperature)


def paired_weeks(
    model: GeneratorModel,
    reference: Sequence[WeeklySchedule],
    n: int = 2000,
    seed: int = 0,
    temperature: float = 1.0,
) -> Tuple[List[WeeklySchedule], List[WeeklySchedule]]:
    """
    ``n`` generated weeks whose attributes are resampled from ``reference``,
    and the ``n`` reference weeks drawn with the same indices, recoded into
    the model's alphabet.
    """
    picks = reference_picks(n, len(reference), seed)
    chosen = [recode_schedule(reference[i], model.alphabet) for i in picks]
    generated = generate_for_attributes(model, [s.attributes for s in chosen], seed, temperature)
    return generated, chosen


def evaluate_generator(
    model: GeneratorModel,
    reference: Sequence[WeeklySchedule],
    n: int = 2000,
    seed: int = 0,
    temperature: float = 1.0,
):
    """Metrics of ``paired_weeks`` output against the paired reference weeks."""
    from schedule_metrics import compare

    generated, chosen = paired_weeks(model, reference, n, seed, temperature)
    return compare(schedules_to_array(generated), schedules_to_array(chosen))
