"""
Attention masks. ``allowed[q, k]`` is True when query ``q`` may attend to key ``k``.
"""

from dataclasses import dataclass
from typing import Iterable, Optional, Union

import numpy as np


@dataclass(frozen=True, eq=False)
class AttentionMask:
    """
    Boolean L x L matrix (or a batch B x L x L) of allowed query/key pairs.
    No row may be entirely False.
    """

    allowed: np.ndarray
    kind: str = "custom"

    def __post_init__(self):
        allowed = np.asarray(self.allowed, dtype=bool)
        if allowed.ndim not in (2, 3) or allowed.shape[-1] != allowed.shape[-2]:
            raise ValueError(f"attention mask must be L x L or B x L x L, got {allowed.shape}")
        if allowed.shape[-1] == 0:
            raise ValueError("attention mask must cover at least one position")
        if not np.all(allowed.any(axis=-1)):
            raise ValueError("attention mask has a query row with no allowed key")
        allowed.flags.writeable = False
        object.__setattr__(self, "allowed", allowed)

    @property
    def length(self) -> int:
        return self.allowed.shape[-1]

    def additive(self) -> np.ndarray:
        """0 where allowed, -inf elsewhere; batched masks gain a head axis."""
        mask = np.where(self.allowed, 0.0, -np.inf)
        return mask[:, None, :, :] if mask.ndim == 3 else mask


def full_mask(length: int) -> AttentionMask:
    if length < 1:
        raise ValueError(f"length must be >= 1, got {length}")
    return AttentionMask(np.ones((length, length), dtype=bool), kind="full")


def lookahead_mask(length: int) -> AttentionMask:
    """Causal mask: query q sees keys k <= q."""
    if length < 1:
        raise ValueError(f"length must be >= 1, got {length}")
    return AttentionMask(np.tril(np.ones((length, length), dtype=bool)), kind="lookahead")


def imputation_mask(
    input_states,
    at_home_code: Union[int, Iterable[int]],
    padding: Optional[np.ndarray] = None,
) -> AttentionMask:
    """
    Mask for the imputation model. Every query sees the keys that are not at
    home; an at-home query also sees at-home keys strictly before it. Away
    queries never read at-home keys, so an at-home identity reaches only later
    at-home positions, whatever the depth. Padded keys are never visible. A
    query left without any key attends to itself only.

    :param input_states: L or B x L input codes
    :param at_home_code: code (or codes) marking at-home positions
    :param padding: optional boolean array, True at padded positions
    """
    states = np.asarray(input_states)
    if states.ndim not in (1, 2):
        raise ValueError(f"input_states must be L or B x L, got shape {states.shape}")
    codes = np.atleast_1d(np.asarray(list(at_home_code) if not np.isscalar(at_home_code) else at_home_code))
    home = np.isin(states, codes)
    length = states.shape[-1]

    earlier = np.tril(np.ones((length, length), dtype=bool), k=-1)
    allowed = (~home)[..., None, :] | (home[..., :, None] & earlier)
    if padding is not None:
        padding = np.asarray(padding, dtype=bool)
        if padding.shape != states.shape:
            raise ValueError(f"padding shape {padding.shape} does not match states {states.shape}")
        allowed = allowed & ~padding[..., None, :]

    empty = ~allowed.any(axis=-1)
    if np.any(empty):
        idx = np.nonzero(empty)
        allowed[idx + (idx[-1],)] = True
    return AttentionMask(allowed, kind="imputation")
