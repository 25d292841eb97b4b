"""
At-home activity imputation.

Input tokens use the activity alphabet (activities 0..9, away states
10..14) plus a placeholder for unresolved at-home steps and a padding token.
Positions are indices into a 4am-origin week, weekday * 144 + diary step, so
training diaries and imputed weeks share one clock.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from schedule_attention import (
    InputFeatureSpec,
    assemble_inputs,
    encoder_forward,
    imputation_mask,
    init_encoder_params,
    init_input_params,
)
from schedule_domain import (
    AT_HOME_LABEL,
    DIARY_ORIGIN_STEP,
    MAX_DIARY_DAYS,
    N_ACTIVITIES,
    N_ACTIVITY_STATES,
    STEPS_PER_DAY,
    STEPS_PER_WEEK,
    DiaryDay,
    DiarySample,
    PersonAttributes,
    SplitPlan,
    StateAlphabet,
    WeeklySchedule,
    activity_alphabet,
    attributes_to_arrays,
    mobility_alphabet,
    mobility_to_activity_code,
    recode_schedule,
    shared_alphabet,
    validate_diary,
    validate_schedule,
    week_weekdays,
)
from schedule_numerics import Tensor, cross_entropy, parameter

from .generator import GeneratorModel, _require_trained, generate_for_attributes
from .sampling import reference_picks, sample_categorical, sequence_rngs
from .training import ModelConfig, TrainReport, accumulate_gradients, batches, frozen, run_training

logger = logging.getLogger(__name__)

PLACEHOLDER = N_ACTIVITY_STATES
PAD = PLACEHOLDER + 1
IGNORE = -1
HOME_TOKENS = tuple(range(N_ACTIVITIES)) + (PLACEHOLDER,)
DIARY_LENGTH = MAX_DIARY_DAYS * STEPS_PER_DAY
HEAD_INIT_SCALE = 0.1

IMPUTE_STREAM = 1


@dataclass
class ImputerModel:
    """
    :param config: encoder, embedding and training settings
    :param alphabet: 15-state activity alphabet
    :param mobility: mobility alphabet the imputed weeks come from
    """

    KIND = "imputer"

    config: ModelConfig
    alphabet: StateAlphabet = field(default_factory=activity_alphabet)
    mobility: StateAlphabet = field(default_factory=mobility_alphabet)
    params: Dict[str, Tensor] = field(default_factory=dict)
    seed: int = 0
    trained: bool = False

    @property
    def features(self) -> InputFeatureSpec:
        c = self.config
        return InputFeatureSpec(
            state_vocab=PAD + 1,
            d_model=c.encoder.d_model,
            state_embed_dim=c.state_embed_dim,
            weekday_embed_dim=c.weekday_embed_dim,
            age_embed_dim=c.age_embed_dim,
            occupation_embed_dim=c.occupation_embed_dim,
        )

    @classmethod
    def initialise(cls, config: ModelConfig, seed: int = 0, alphabet=None, mobility=None):
        if config.encoder.max_len < STEPS_PER_WEEK:
            raise ValueError(f"encoder max_len must be >= {STEPS_PER_WEEK}, got {config.encoder.max_len}")
        mobility = mobility or mobility_alphabet()
        alphabet = alphabet or activity_alphabet(mobility=mobility)
        model = cls(config=config, alphabet=alphabet, mobility=mobility, seed=int(seed))
        rng = np.random.default_rng([int(seed), 0])
        d = config.encoder.d_model
        model.params.update(init_input_params(model.features, rng))
        model.params.update(init_encoder_params(config.encoder, rng))
        model.params["head.w"] = parameter(rng.normal(0.0, HEAD_INIT_SCALE / np.sqrt(d), size=(d, N_ACTIVITIES)))
        model.params["head.b"] = parameter(np.zeros(N_ACTIVITIES))
        return model

    def logits(self, tokens, weekdays, positions, padding, ages, occupations, params=None, train=False, rng=None):
        """Activity logits, B x L x 10."""
        params = self.params if params is None else params
        x = assemble_inputs(params, self.features, tokens, weekdays, ages, occupations, positions=positions)
        mask = imputation_mask(tokens, HOME_TOKENS, padding)
        h = encoder_forward(x, mask, self.config.encoder, params, train=train, rng=rng)
        return h @ params["head.w"] + params["head.b"]

    def to_state(self) -> Tuple[dict, Dict[str, np.ndarray]]:
        meta = {
            "config": self.config.to_dict(),
            "alphabets": {"activity": self.alphabet.to_dict(), "mobility": self.mobility.to_dict()},
            "seed": self.seed,
            "trained": self.trained,
        }
        return meta, {name: p.data for name, p in self.params.items()}

    @classmethod
    def from_state(cls, meta: dict, arrays: Dict[str, np.ndarray]) -> "ImputerModel":
        model = cls(
            config=ModelConfig.from_dict(meta["config"]),
            alphabet=StateAlphabet.from_dict(meta["alphabets"]["activity"]),
            mobility=StateAlphabet.from_dict(meta["alphabets"]["mobility"]),
            seed=int(meta["seed"]),
            trained=bool(meta.get("trained", True)),
        )
        model.params = {name: parameter(arr) for name, arr in arrays.items()}
        return model


@dataclass
class DiaryBatch:
    """Diary samples laid out as padded B x 432 arrays."""

    codes: np.ndarray
    weekdays: np.ndarray
    positions: np.ndarray
    padding: np.ndarray
    ages: np.ndarray
    occupations: np.ndarray
    day_counts: np.ndarray

    @property
    def home(self) -> np.ndarray:
        return (self.codes < N_ACTIVITIES) & (self.codes >= 0) & ~self.padding

    def take(self, idx) -> "DiaryBatch":
        return DiaryBatch(*(getattr(self, k)[idx] for k in self.__dataclass_fields__))


def diary_batch(samples: Sequence[DiarySample]) -> DiaryBatch:
    """
    Concatenate each sample's days in weekday order and pad to 432 steps.
    Padded steps carry the padding token, weekday 0 and position 0.
    """
    b = len(samples)
    codes = np.full((b, DIARY_LENGTH), PAD, dtype=np.int64)
    weekdays = np.zeros((b, DIARY_LENGTH), dtype=np.int64)
    positions = np.zeros((b, DIARY_LENGTH), dtype=np.int64)
    padding = np.ones((b, DIARY_LENGTH), dtype=bool)
    for i, sample in enumerate(samples):
        for j, day in enumerate(sample.days):
            span = slice(j * STEPS_PER_DAY, (j + 1) * STEPS_PER_DAY)
            codes[i, span] = day.states
            weekdays[i, span] = day.weekday
            positions[i, span] = day.weekday * STEPS_PER_DAY + np.arange(STEPS_PER_DAY)
            padding[i, span] = False
    ages, occupations = attributes_to_arrays([s.attributes for s in samples])
    counts = np.array([len(s.days) for s in samples], dtype=np.int64)
    return DiaryBatch(codes, weekdays, positions, padding, ages, occupations, counts)


def reveal_inputs(batch: DiaryBatch, rng: np.random.Generator, scheme: str = "prefix") -> Tuple[np.ndarray, np.ndarray]:
    """
    Build input tokens and targets for one pass over ``batch``.

    With "prefix" a cut is drawn among each sample's at-home steps: earlier
    at-home steps carry their true activity, the cut and later ones the
    placeholder, and only those are scored. With "none" every at-home step
    is a placeholder and scored.

    :return: (tokens, targets) with targets = -1 where not scored
    """
    home = batch.home
    tokens = batch.codes.copy()
    targets = np.full_like(tokens, IGNORE)
    steps = np.arange(tokens.shape[1])
    for i in range(tokens.shape[0]):
        spots = np.flatnonzero(home[i])
        if spots.size == 0:
            continue
        cut = spots[rng.integers(spots.size)] if scheme == "prefix" else 0
        hidden = home[i] & (steps >= cut)
        tokens[i, hidden] = PLACEHOLDER
        targets[i, hidden] = batch.codes[i, hidden]
    return tokens, targets


def _check_diaries(corpus: Sequence[DiarySample]) -> None:
    for sample in corpus:
        violations = validate_diary(sample)
        if violations:
            raise ValueError(f"invalid diary for person {sample.person_id!r}: {violations[0]}")


def _diary_alphabets(corpus: Sequence[DiarySample], mobility: Optional[StateAlphabet]):
    alphabet = shared_alphabet(corpus)
    if alphabet.kind != "activity":
        raise ValueError(f"the imputer trains on activity diaries, got a {alphabet.kind} alphabet")
    if mobility is None:
        mobility = mobility_alphabet((AT_HOME_LABEL,) + alphabet.labels[N_ACTIVITIES:])
    if activity_alphabet(alphabet.labels[:N_ACTIVITIES], mobility) != alphabet:
        raise ValueError(
            f"diary alphabet {list(alphabet.labels)} does not match mobility alphabet {list(mobility.labels)}"
        )
    return alphabet, mobility


def train_imputer(
    corpus: Sequence[DiarySample],
    split: Optional[SplitPlan],
    fold: int,
    config: ModelConfig,
    seed: int,
    verbose: bool = False,
    mobility: Optional[StateAlphabet] = None,
) -> Tuple[ImputerModel, TrainReport]:
    """
    Train on diaries with the loss restricted to hidden at-home steps.

    :param split: person split; None trains and validates on the whole corpus
    :param mobility: mobility alphabet of the weeks the model will enrich; by
        default "at home" followed by the away states of the diary alphabet
    """
    _check_diaries(corpus)
    alphabet, mobility = _diary_alphabets(corpus, mobility)
    if split is None:
        train, valid = list(corpus), list(corpus)
    else:
        train_ids, valid_ids = set(split.train_ids(fold)), set(split.validation_ids(fold))
        train = [s for s in corpus if s.person_id in train_ids]
        valid = [s for s in corpus if s.person_id in valid_ids]
    if not train:
        raise ValueError("training fold is empty")
    if not valid:
        valid = train

    data = diary_batch(train)
    if not np.any(data.home):
        raise ValueError("training diaries contain no at-home steps")
    v_data = diary_batch(valid)
    if not np.any(v_data.home):
        v_data = data

    model = ImputerModel.initialise(config, seed=seed, alphabet=alphabet, mobility=mobility)
    tc = config.training
    rng = np.random.default_rng([int(seed), 1])
    v_tokens, v_targets = reveal_inputs(v_data, np.random.default_rng([int(seed), 3]), tc.reveal)
    epoch_inputs = {}

    def micro_loss(payload) -> Tensor:
        part, tokens, targets = payload
        logits = model.logits(
            tokens, part.weekdays, part.positions, part.padding, part.ages, part.occupations, train=True, rng=rng
        )
        return cross_entropy(logits.reshape(-1, N_ACTIVITIES), targets.reshape(-1), ignore_code=IGNORE)

    def batch_step(indices, epoch) -> float:
        if epoch not in epoch_inputs:
            epoch_inputs.clear()
            epoch_inputs[epoch] = reveal_inputs(data, rng, tc.reveal)
        tokens, targets = epoch_inputs[epoch]
        pieces = []
        for chunk in batches(indices, tc.micro_batch):
            count = int(np.sum(targets[chunk] != IGNORE))
            pieces.append(((data.take(chunk), tokens[chunk], targets[chunk]), count))
        return accumulate_gradients(pieces, micro_loss)

    def evaluate(params):
        return _scored_loss(model, params, v_data, v_tokens, v_targets)

    logger.info("training imputer on %d diaries (%d validation)", len(train), len(valid))
    report = run_training(model.params, len(train), batch_step, evaluate, tc, rng, verbose=verbose)
    model.trained = True
    return model, report


def _scored_loss(model, params, data: DiaryBatch, tokens, targets) -> Tuple[float, float]:
    total_loss, correct, count = 0.0, 0, 0
    for idx in batches(np.arange(tokens.shape[0]), model.config.training.micro_batch):
        scored = targets[idx] != IGNORE
        n = int(scored.sum())
        if n == 0:
            continue
        part = data.take(idx)
        logits = model.logits(
            tokens[idx], part.weekdays, part.positions, part.padding, part.ages, part.occupations, params=params
        )
        flat = logits.reshape(-1, N_ACTIVITIES)
        total_loss += float(cross_entropy(flat, targets[idx].reshape(-1), ignore_code=IGNORE).data) * n
        predicted = np.argmax(flat.data, axis=1)[scored.reshape(-1)]
        correct += int(np.sum(predicted == targets[idx][scored]))
        count += n
    if count == 0:
        return float("nan"), float("nan")
    return total_loss / count, correct / count


def scored_loss(model: ImputerModel, corpus: Sequence[DiarySample], seed: int = 0) -> Tuple[float, float]:
    """Cross entropy and accuracy on hidden at-home steps of ``corpus``."""
    data = diary_batch(corpus)
    tokens, targets = reveal_inputs(data, np.random.default_rng([int(seed), 3]), model.config.training.reveal)
    return _scored_loss(model, frozen(model.params), data, tokens, targets)


def _impute_tokens(model, params, data: DiaryBatch, rngs, temperature: float) -> np.ndarray:
    """
    Resolve placeholders chronologically. At step t every sequence with a
    placeholder there gets a forward pass on its current tokens and a draw.
    """
    tokens = data.codes.copy()
    for t in range(tokens.shape[1]):
        rows = np.flatnonzero(tokens[:, t] == PLACEHOLDER)
        if rows.size == 0:
            continue
        part = data.take(rows)
        logits = model.logits(
            tokens[rows], part.weekdays, part.positions, part.padding, part.ages, part.occupations, params=params
        )
        tokens[rows, t] = sample_categorical(logits.data[:, t], [rngs[i] for i in rows], temperature)
    return tokens


def impute_batch(
    model: ImputerModel,
    weeks: Sequence[WeeklySchedule],
    seed: int,
    temperature: float = 1.0,
    batch_size: int = 64,
    verbose: bool = False,
) -> List[WeeklySchedule]:
    """
    Replace every at-home step of each mobility week by an activity. Week i
    uses the random stream (seed, i); away steps are copied unchanged.
    """
    _require_trained(model)
    if temperature < 0:
        raise ValueError(f"temperature must be >= 0, got {temperature}")
    for week in weeks:
        if week.alphabet.kind != "mobility":
            raise ValueError(f"impute expects mobility weeks, got a {week.alphabet.kind} alphabet")
        violations = validate_schedule(week)
        if violations:
            raise ValueError(f"invalid week for person {week.person_id!r}: {violations[0]}")
    weeks = [recode_schedule(week, model.mobility) for week in weeks]

    params = frozen(model.params)
    log = logger.info if verbose else logger.debug
    frame_weekdays = week_weekdays()
    out: List[WeeklySchedule] = []
    for start in range(0, len(weeks), batch_size):
        chunk = list(weeks[start : start + batch_size])
        b = len(chunk)
        codes = np.stack([mobility_to_activity_code(w.states, model.mobility) for w in chunk])
        # 4am-origin frame: frame step p is week step p + 24 (mod 1008)
        codes = np.roll(codes, -DIARY_ORIGIN_STEP, axis=1)
        codes[codes < 0] = PLACEHOLDER
        ages, occupations = attributes_to_arrays([w.attributes for w in chunk])
        data = DiaryBatch(
            codes=codes,
            weekdays=np.broadcast_to(frame_weekdays, codes.shape).copy(),
            positions=np.broadcast_to(np.arange(STEPS_PER_WEEK), codes.shape).copy(),
            padding=np.zeros(codes.shape, dtype=bool),
            ages=ages,
            occupations=occupations,
            day_counts=np.full(b, 7),
        )
        rngs = sequence_rngs(seed, start, b, stream=IMPUTE_STREAM)
        tokens = np.roll(_impute_tokens(model, params, data, rngs, temperature), DIARY_ORIGIN_STEP, axis=1)
        log("imputed weeks %d..%d", start, start + b - 1)
        out.extend(WeeklySchedule(tokens[i], chunk[i].attributes, model.alphabet) for i in range(b))
    return out


def impute(model: ImputerModel, week: WeeklySchedule, seed: int, temperature: float = 1.0) -> WeeklySchedule:
    """Activity week for one mobility week."""
    return impute_batch(model, [week], seed, temperature)[0]


def impute_diaries(
    model: ImputerModel, samples: Sequence[DiarySample], seed: int, temperature: float = 1.0
) -> List[DiarySample]:
    """Re-impute the at-home steps of diary samples in their own 4am frame."""
    _require_trained(model)
    for sample in samples:
        if sample.alphabet != model.alphabet:
            raise ValueError(f"diary of person {sample.person_id!r} does not use the imputer's activity alphabet")
    data = diary_batch(samples)
    home = data.home
    data.codes[home] = PLACEHOLDER
    rngs = sequence_rngs(seed, 0, len(samples), stream=IMPUTE_STREAM)
    tokens = _impute_tokens(model, frozen(model.params), data, rngs, temperature)
    out = []
    for i, sample in enumerate(samples):
        days = tuple(
            DiaryDay(day.weekday, tokens[i, j * STEPS_PER_DAY : (j + 1) * STEPS_PER_DAY])
            for j, day in enumerate(sample.days)
        )
        out.append(DiarySample(days, sample.attributes, model.alphabet))
    return out


def paired_days(
    model: ImputerModel,
    reference: Sequence[DiarySample],
    n: int = 2000,
    seed: int = 0,
    temperature: float = 1.0,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Re-impute ``n`` diaries resampled from ``reference``.

    :return: (imputed days, original days), each D x 144 in the 4am frame
    """
    picks = [reference[i] for i in reference_picks(n, len(reference), seed)]
    imputed = impute_diaries(model, picks, seed, temperature)
    generated = np.stack([d.states for s in imputed for d in s.days])
    original = np.stack([d.states for s in picks for d in s.days])
    return generated, original


def evaluate_imputer(
    model: ImputerModel,
    reference: Sequence[DiarySample],
    n: int = 2000,
    seed: int = 0,
    temperature: float = 1.0,
):
    """Day-length metrics of re-imputed diaries against the originals, without the Hamming term."""
    from schedule_metrics import compare

    generated, original = paired_days(model, reference, n, seed, temperature)
    return compare(generated, original, include_hd=False, max_lag=STEPS_PER_DAY // 2)


def synthesize_activity_weeks(
    generator: GeneratorModel,
    imputer: ImputerModel,
    attributes: Sequence[PersonAttributes],
    seed: int,
    temperature: float = 1.0,
    verbose: bool = False,
) -> List[WeeklySchedule]:
    """Generate mobility weeks and enrich their at-home steps with activities."""
    weeks = generate_for_attributes(generator, attributes, seed, temperature, verbose=verbose)
    return impute_batch(imputer, weeks, seed, temperature, verbose=verbose)
