"""Categorical sampling from logits with per-sequence random streams."""

from typing import Sequence

import numpy as np
from scipy.special import softmax

GREEDY_TEMPERATURE = 1e-8


def sequence_rngs(seed: int, start: int, count: int, stream: int = 0) -> list:
    """Independent generators for sequences ``start .. start+count-1`` of a run."""
    return [np.random.default_rng([int(seed), int(stream), int(start + i)]) for i in range(count)]


def sample_categorical(logits: np.ndarray, rngs: Sequence[np.random.Generator], temperature: float = 1.0) -> np.ndarray:
    """
    Draw one code per row of ``logits``.

    Temperatures below ``GREEDY_TEMPERATURE`` pick the argmax. Otherwise rows are sampled from
    softmax(logits / temperature) with the exponential race: the argmax of
    p / E, E ~ Exp(1), is distributed as p.

    :param logits: B x K
    :param rngs: one generator per row
    """
    logits = np.asarray(logits, dtype=np.float64)
    if logits.ndim != 2:
        raise ValueError(f"logits must be B x K, got shape {logits.shape}")
    if len(rngs) != logits.shape[0]:
        raise ValueError(f"need one generator per row, got {len(rngs)} for {logits.shape[0]} rows")
    if temperature < 0:
        raise ValueError(f"temperature must be >= 0, got {temperature}")
    if temperature < GREEDY_TEMPERATURE:
        return np.argmax(logits, axis=1)
    probs = softmax(logits / temperature, axis=1)
    race = np.stack([rng.exponential(size=logits.shape[1]) for rng in rngs])
    return np.argmax(probs / np.maximum(race, 1e-300), axis=1)


def reference_picks(n: int, size: int, seed: int) -> np.ndarray:
    """Indices of ``n`` reference records drawn with replacement for an evaluation."""
    if n < 1:
        raise ValueError(f"n must be positive, got {n}")
    if size < 1:
        raise ValueError("reference corpus is empty")
    return np.random.default_rng([int(seed), 2]).integers(0, size, size=n)
