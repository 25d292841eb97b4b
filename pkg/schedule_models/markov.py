"""
First-order, time-inhomogeneous Markov chain over weekly mobility states.

P[t, i, j] is the probability of moving from state i at step t to state j at
step t+1; P[1007] wraps from the last step of the week to the first.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from schedule_domain import (
    STEPS_PER_WEEK,
    PersonAttributes,
    StateAlphabet,
    WeeklySchedule,
    attributes_to_arrays,
    mobility_alphabet,
    schedules_to_array,
)

from .training import ModelStateError

logger = logging.getLogger(__name__)

DEFAULT_ALPHA = 0.5
MIN_STRATUM_PERSONS = 30

Cell = Tuple[int, int]


@dataclass
class MarkovChain:
    """Initial distribution ``initial`` (K) and transitions ``transitions`` (1008 x K x K)."""

    initial: np.ndarray
    transitions: np.ndarray
    persons: int = 0


def _fit_chain(states: np.ndarray, n_states: int, alpha: float) -> MarkovChain:
    n, length = states.shape
    counts = np.zeros((length, n_states, n_states))
    source = states
    target = np.roll(states, -1, axis=1)
    steps = np.broadcast_to(np.arange(length), states.shape)
    np.add.at(counts, (steps.ravel(), source.ravel(), target.ravel()), 1.0)

    counts += alpha
    totals = counts.sum(axis=2, keepdims=True)
    # unobserved rows at alpha = 0 are uniform
    transitions = np.where(totals > 0, counts / np.where(totals > 0, totals, 1.0), 1.0 / n_states)

    initial = np.bincount(states[:, 0], minlength=n_states).astype(np.float64) + alpha
    initial /= initial.sum()
    return MarkovChain(initial=initial, transitions=transitions, persons=n)


@dataclass
class MarkovModel:
    """
    :param pooled: chain fitted on the whole corpus
    :param strata: chains per (age, occupation) cell with enough persons
    :param alpha: additive smoothing of the transition counts
    """

    KIND = "markov"

    pooled: Optional[MarkovChain] = None
    strata: Dict[Cell, MarkovChain] = field(default_factory=dict)
    alpha: float = DEFAULT_ALPHA
    alphabet: StateAlphabet = field(default_factory=mobility_alphabet)

    @property
    def fitted(self) -> bool:
        return self.pooled is not None

    @property
    def transitions(self) -> np.ndarray:
        self._require_fitted()
        return self.pooled.transitions

    @property
    def initial(self) -> np.ndarray:
        self._require_fitted()
        return self.pooled.initial

    def chain_for(self, attributes: Optional[PersonAttributes]) -> MarkovChain:
        self._require_fitted()
        if attributes is None:
            return self.pooled
        return self.strata.get((attributes.age_class, attributes.occupation_class), self.pooled)

    def _require_fitted(self) -> None:
        if self.pooled is None:
            raise ModelStateError("Markov model has not been fitted")

    def to_state(self) -> Tuple[dict, Dict[str, np.ndarray]]:
        self._require_fitted()
        cells = sorted(self.strata)
        meta = {
            "alpha": self.alpha,
            "alphabets": {"mobility": self.alphabet.to_dict()},
            "strata": [[a, o, self.strata[(a, o)].persons] for a, o in cells],
            "persons": self.pooled.persons,
            "seed": 0,
        }
        arrays = {"pooled.initial": self.pooled.initial, "pooled.transitions": self.pooled.transitions}
        for a, o in cells:
            arrays[f"stratum.{a}.{o}.initial"] = self.strata[(a, o)].initial
            arrays[f"stratum.{a}.{o}.transitions"] = self.strata[(a, o)].transitions
        return meta, arrays

    @classmethod
    def from_state(cls, meta: dict, arrays: Dict[str, np.ndarray]) -> "MarkovModel":
        model = cls(alpha=float(meta["alpha"]), alphabet=StateAlphabet.from_dict(meta["alphabets"]["mobility"]))
        model.pooled = MarkovChain(arrays["pooled.initial"], arrays["pooled.transitions"], int(meta["persons"]))
        for a, o, persons in meta["strata"]:
            model.strata[(a, o)] = MarkovChain(
                arrays[f"stratum.{a}.{o}.initial"], arrays[f"stratum.{a}.{o}.transitions"], int(persons)
            )
        return model


def fit_markov(
    corpus: Sequence[WeeklySchedule],
    alpha: float = DEFAULT_ALPHA,
    stratify: bool = True,
    min_persons: int = MIN_STRATUM_PERSONS,
) -> MarkovModel:
    """
    Count transitions per week step.

    :param corpus: weekly mobility schedules
    :param alpha: Laplace smoothing, P = (count + alpha) / (row count + K alpha)
    :param stratify: also fit one chain per (age, occupation) cell with at
        least ``min_persons`` persons
    """
    if len(corpus) == 0:
        raise ValueError("cannot fit a Markov model on an empty corpus")
    if alpha < 0:
        raise ValueError(f"alpha must be >= 0, got {alpha}")
    states = schedules_to_array(corpus)
    alphabet = corpus[0].alphabet
    if states.shape[1] != STEPS_PER_WEEK:
        raise ValueError(f"schedules must have {STEPS_PER_WEEK} steps, got {states.shape[1]}")
    if states.min() < 0 or states.max() >= alphabet.size:
        raise ValueError(f"state codes must be in 0..{alphabet.size - 1}")

    model = MarkovModel(alpha=float(alpha), alphabet=alphabet)
    model.pooled = _fit_chain(states, alphabet.size, alpha)
    if stratify:
        ages, occupations = attributes_to_arrays([s.attributes for s in corpus])
        for cell in sorted(set(zip(ages.tolist(), occupations.tolist()))):
            rows = (ages == cell[0]) & (occupations == cell[1])
            if rows.sum() >= min_persons:
                model.strata[cell] = _fit_chain(states[rows], alphabet.size, alpha)
    logger.info("fitted Markov chain on %d schedules, %d strata", len(corpus), len(model.strata))
    return model


def _sample_chain(chain: MarkovChain, rngs: Sequence[np.random.Generator]) -> np.ndarray:
    b = len(rngs)
    uniforms = np.stack([rng.random(STEPS_PER_WEEK) for rng in rngs])
    cdf0 = np.cumsum(chain.initial)
    out = np.empty((b, STEPS_PER_WEEK), dtype=np.int64)
    k = chain.initial.size
    out[:, 0] = np.minimum(np.searchsorted(cdf0, uniforms[:, 0], side="right"), k - 1)
    cdfs = np.cumsum(chain.transitions, axis=2)
    for t in range(STEPS_PER_WEEK - 1):
        rows = cdfs[t, out[:, t]]
        out[:, t + 1] = np.minimum((uniforms[:, t + 1, None] >= rows).sum(axis=1), k - 1)
    return out


def sample_markov(
    model: MarkovModel,
    n: int,
    seed: int,
    attributes: Optional[Sequence[PersonAttributes]] = None,
) -> List[WeeklySchedule]:
    """
    Sample ``n`` weeks; week i uses the random stream (seed, i). With
    ``attributes`` (one per week) each week comes from its cell's chain.
    """
    if not model.fitted:
        raise ModelStateError("Markov model has not been fitted")
    if n < 1:
        raise ValueError(f"n must be positive, got {n}")
    if attributes is not None and len(attributes) != n:
        raise ValueError(f"got {len(attributes)} attribute records for n = {n}")
    rngs = [np.random.default_rng([int(seed), 2, i]) for i in range(n)]
    records = list(attributes) if attributes is not None else [PersonAttributes(0, 0, "") for _ in range(n)]
    states = np.empty((n, STEPS_PER_WEEK), dtype=np.int64)

    groups: Dict[int, List[int]] = {}
    chains: Dict[int, MarkovChain] = {}
    for i, record in enumerate(records):
        chain = model.chain_for(record if attributes is not None else None)
        groups.setdefault(id(chain), []).append(i)
        chains[id(chain)] = chain
    for key, idx in groups.items():
        states[idx] = _sample_chain(chains[key], [rngs[i] for i in idx])
    return [WeeklySchedule(states[i], records[i], model.alphabet) for i in range(n)]
