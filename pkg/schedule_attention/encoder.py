"""
Transformer encoder stack shared by the generator and the imputer.

Parameters live in a flat ``dict[str, Tensor]``; names are stable so that
checkpoints can store them block by block.
"""

import logging
from dataclasses import asdict, dataclass
from typing import Dict, List, Optional, Union

import numpy as np

from schedule_domain import DAYS_PER_WEEK, N_AGE_CLASSES, N_OCCUPATION_CLASSES
from schedule_numerics import (
    Tensor,
    add,
    concat,
    dropout,
    embedding_lookup,
    layer_norm,
    parameter,
    relu,
    scale,
    softmax,
)

from .masks import AttentionMask

logger = logging.getLogger(__name__)

NORM_PLACEMENTS = ("post", "pre")

Params = Dict[str, Tensor]


@dataclass(frozen=True)
class EncoderConfig:
    """
    :param layers: number of encoder blocks (0 gives the identity)
    :param d_model: model width, divisible by ``heads``
    :param heads: attention heads
    :param d_ff: feed-forward width, defaults to 4 * d_model
    :param dropout: dropout rate used in training mode
    :param max_len: longest sequence the model accepts
    :param norm: "post" (residual then layer norm) or "pre"
    """

    layers: int = 2
    d_model: int = 64
    heads: int = 4
    d_ff: Optional[int] = None
    dropout: float = 0.1
    max_len: int = 1008
    norm: str = "post"
    layer_norm_eps: float = 1e-5

    def __post_init__(self):
        if self.d_ff is None:
            object.__setattr__(self, "d_ff", 4 * int(self.d_model))
        self.validate()

    def validate(self) -> None:
        if self.layers < 0:
            raise ValueError(f"layers must be >= 0, got {self.layers}")
        if self.d_model < 2 or self.d_model % 2:
            raise ValueError(f"d_model must be even and >= 2, got {self.d_model}")
        if self.heads < 1 or self.d_model % self.heads:
            raise ValueError(f"d_model ({self.d_model}) must be divisible by heads ({self.heads})")
        if self.d_ff < 1:
            raise ValueError(f"d_ff must be positive, got {self.d_ff}")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.max_len < 1:
            raise ValueError(f"max_len must be positive, got {self.max_len}")
        if self.norm not in NORM_PLACEMENTS:
            raise ValueError(f"norm must be one of {NORM_PLACEMENTS}, got {self.norm!r}")

    @property
    def head_dim(self) -> int:
        return self.d_model // self.heads

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "EncoderConfig":
        return cls(**data)


@dataclass(frozen=True)
class InputFeatureSpec:
    """
    Widths of the per-step feature embeddings. The concatenation
    state | weekday | age | occupation is projected to ``d_model``.

    :param state_vocab: number of input tokens (states plus special tokens)
    """

    state_vocab: int
    d_model: int
    state_embed_dim: int = 16
    weekday_embed_dim: int = 4
    age_embed_dim: int = 4
    occupation_embed_dim: int = 4

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.state_vocab < 2:
            raise ValueError(f"state_vocab must be >= 2, got {self.state_vocab}")
        for name in ("d_model", "state_embed_dim", "weekday_embed_dim", "age_embed_dim", "occupation_embed_dim"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")

    @property
    def concat_width(self) -> int:
        return self.state_embed_dim + self.weekday_embed_dim + self.age_embed_dim + self.occupation_embed_dim

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "InputFeatureSpec":
        return cls(**data)


# ----------------------------------------------------------------------
# Positional encoding
# ----------------------------------------------------------------------


def positional_rows(positions, d_model: int) -> np.ndarray:
    """Sinusoidal encoding rows for arbitrary integer positions."""
    if d_model < 2 or d_model % 2:
        raise ValueError(f"d_model must be even, got {d_model}")
    positions = np.asarray(positions, dtype=np.float64)
    # 10000^(2i/d) for i = 0..d/2-1
    inv_freq = 1.0 / np.power(10000.0, np.arange(0, d_model, 2, dtype=np.float64) / d_model)
    angles = positions[..., None] * inv_freq
    pe = np.empty(positions.shape + (d_model,), dtype=np.float64)
    pe[..., 0::2] = np.sin(angles)
    pe[..., 1::2] = np.cos(angles)
    return pe


def positional_encoding(max_len: int, d_model: int) -> np.ndarray:
    """
    :param max_len: number of rows
    :param d_model: even model width
    :return: max_len x d_model matrix, PE(pos, 2i) = sin(pos / 10000^(2i/d)),
        PE(pos, 2i+1) = cos(pos / 10000^(2i/d))
    """
    if max_len < 1:
        raise ValueError(f"max_len must be positive, got {max_len}")
    return positional_rows(np.arange(max_len), d_model)


# ----------------------------------------------------------------------
# Parameter initialisation
# ----------------------------------------------------------------------


def _dense(rng: np.random.Generator, fan_in: int, fan_out: int) -> Tensor:
    return parameter(rng.normal(0.0, 1.0 / np.sqrt(fan_in), size=(fan_in, fan_out)))


def init_input_params(spec: InputFeatureSpec, rng: np.random.Generator, prefix: str = "input.") -> Params:
    return {
        prefix + "state": parameter(rng.normal(0.0, 1.0, size=(spec.state_vocab, spec.state_embed_dim))),
        prefix + "weekday": parameter(rng.normal(0.0, 1.0, size=(DAYS_PER_WEEK, spec.weekday_embed_dim))),
        prefix + "age": parameter(rng.normal(0.0, 1.0, size=(N_AGE_CLASSES, spec.age_embed_dim))),
        prefix + "occupation": parameter(
            rng.normal(0.0, 1.0, size=(N_OCCUPATION_CLASSES, spec.occupation_embed_dim))
        ),
        prefix + "proj_w": _dense(rng, spec.concat_width, spec.d_model),
        prefix + "proj_b": parameter(np.zeros(spec.d_model)),
    }


def init_encoder_params(config: EncoderConfig, rng: np.random.Generator, prefix: str = "encoder.") -> Params:
    d, f = config.d_model, config.d_ff
    params: Params = {}
    for i in range(config.layers):
        p = f"{prefix}layer{i}."
        for name in ("wq", "wk", "wv", "wo"):
            params[p + "attn." + name] = _dense(rng, d, d)
            params[p + "attn.b" + name[1]] = parameter(np.zeros(d))
        params[p + "ln1.gamma"] = parameter(np.ones(d))
        params[p + "ln1.beta"] = parameter(np.zeros(d))
        params[p + "ffn.w1"] = _dense(rng, d, f)
        params[p + "ffn.b1"] = parameter(np.zeros(f))
        params[p + "ffn.w2"] = _dense(rng, f, d)
        params[p + "ffn.b2"] = parameter(np.zeros(d))
        params[p + "ln2.gamma"] = parameter(np.ones(d))
        params[p + "ln2.beta"] = parameter(np.zeros(d))
    if config.norm == "pre" and config.layers > 0:
        params[prefix + "final.gamma"] = parameter(np.ones(d))
        params[prefix + "final.beta"] = parameter(np.zeros(d))
    return params


# ----------------------------------------------------------------------
# Input assembly
# ----------------------------------------------------------------------


def _per_step_codes(states, weekdays, age_class, occupation_class):
    states = np.asarray(states, dtype=np.int64)
    single = states.ndim == 1
    if single:
        states = states[None, :]
    if states.ndim != 2:
        raise ValueError(f"states must be L or B x L, got shape {states.shape}")
    batch, length = states.shape
    weekdays = np.broadcast_to(np.asarray(weekdays, dtype=np.int64), (batch, length))
    ages = np.broadcast_to(np.asarray(age_class, dtype=np.int64).reshape(-1, 1), (batch, length))
    occupations = np.broadcast_to(np.asarray(occupation_class, dtype=np.int64).reshape(-1, 1), (batch, length))
    return single, states, weekdays, ages, occupations


def feature_concat(
    params: Params, spec: InputFeatureSpec, states, weekdays, age_class, occupation_class, prefix: str = "input."
) -> Tensor:
    """
    Concatenated per-step features before projection, B x L x concat_width
    (L x concat_width for a single sequence). Person attributes are repeated
    at every step.
    """
    single, states, weekdays, ages, occupations = _per_step_codes(
        states, weekdays, age_class, occupation_class
    )
    features = concat(
        [
            embedding_lookup(params[prefix + "state"], states),
            embedding_lookup(params[prefix + "weekday"], weekdays),
            embedding_lookup(params[prefix + "age"], ages),
            embedding_lookup(params[prefix + "occupation"], occupations),
        ],
        axis=-1,
    )
    return features.reshape(features.shape[1:]) if single else features


def assemble_inputs(
    params: Params,
    spec: InputFeatureSpec,
    states,
    weekdays,
    age_class,
    occupation_class,
    positions=None,
    prefix: str = "input.",
) -> Tensor:
    """
    Embed, concatenate and project the per-step features, then add the
    sinusoidal position rows.

    :param states: L or B x L input token codes
    :param weekdays: weekday code per step (broadcast against ``states``)
    :param age_class: age class, scalar or one per sequence
    :param occupation_class: occupation class, scalar or one per sequence
    :param positions: position index per step, defaults to 0..L-1
    :return: Tensor of shape (B x) L x d_model
    """
    features = feature_concat(params, spec, states, weekdays, age_class, occupation_class, prefix)
    projected = features @ params[prefix + "proj_w"] + params[prefix + "proj_b"]
    length = projected.shape[-2]
    if positions is None:
        positions = np.arange(length)
    positions = np.asarray(positions)
    if positions.shape[-1] != length:
        raise ValueError(f"positions must have length {length}, got shape {positions.shape}")
    pe = positional_rows(positions, spec.d_model)
    return projected + pe


# ----------------------------------------------------------------------
# Encoder
# ----------------------------------------------------------------------


def _additive_mask(mask, length: int) -> Optional[np.ndarray]:
    if mask is None:
        return None
    if not isinstance(mask, AttentionMask):
        mask = AttentionMask(np.asarray(mask, dtype=bool))
    if mask.length != length:
        raise ValueError(f"mask covers {mask.length} positions, inputs have {length}")
    return mask.additive()


def _attention(x: Tensor, additive, params: Params, p: str, config: EncoderConfig, train, rng, sink) -> Tensor:
    batch, length, d = x.shape
    heads, dh = config.heads, config.head_dim

    def split(t: Tensor) -> Tensor:
        return t.reshape(batch, length, heads, dh).transpose(0, 2, 1, 3)

    q = split(x @ params[p + "wq"] + params[p + "bq"])
    k = split(x @ params[p + "wk"] + params[p + "bk"])
    v = split(x @ params[p + "wv"] + params[p + "bv"])
    scores = scale(q @ k.transpose(0, 1, 3, 2), 1.0 / np.sqrt(dh))
    weights = softmax(scores, axis=-1, mask=additive)
    if sink is not None:
        sink.append(weights.data.copy())
    weights = dropout(weights, config.dropout, train, rng)
    context = (weights @ v).transpose(0, 2, 1, 3).reshape(batch, length, d)
    return context @ params[p + "wo"] + params[p + "bo"]


def _feed_forward(x: Tensor, params: Params, p: str) -> Tensor:
    hidden = relu(x @ params[p + "w1"] + params[p + "b1"])
    return hidden @ params[p + "w2"] + params[p + "b2"]


def encoder_forward(
    inputs: Union[Tensor, np.ndarray],
    mask,
    config: EncoderConfig,
    params: Params,
    train: bool = False,
    rng: Optional[np.random.Generator] = None,
    attention_sink: Optional[List[np.ndarray]] = None,
    prefix: str = "encoder.",
) -> Tensor:
    """
    Run ``config.layers`` encoder blocks.

    :param inputs: (B x) L x d_model
    :param mask: AttentionMask, boolean array or None for full attention
    :param train: enables dropout (needs ``rng``)
    :param attention_sink: list receiving the B x H x L x L weights per layer
    :return: tensor of the input shape
    """
    x = inputs if isinstance(inputs, Tensor) else Tensor(inputs)
    single = x.ndim == 2
    if single:
        x = x.reshape(1, *x.shape)
    if x.ndim != 3:
        raise ValueError(f"inputs must be L x d_model or B x L x d_model, got {x.shape}")
    length, width = x.shape[1], x.shape[2]
    if width != config.d_model:
        raise ValueError(f"inputs have width {width}, config d_model is {config.d_model}")
    if length > config.max_len:
        raise ValueError(f"sequence length {length} exceeds max_len {config.max_len}")
    additive = _additive_mask(mask, length)
    if additive is not None and additive.ndim == 4 and additive.shape[0] not in (1, x.shape[0]):
        raise ValueError(f"mask batch {additive.shape[0]} does not match inputs batch {x.shape[0]}")

    eps = config.layer_norm_eps
    for i in range(config.layers):
        p = f"{prefix}layer{i}."
        if config.norm == "post":
            a = _attention(x, additive, params, p + "attn.", config, train, rng, attention_sink)
            x = layer_norm(add(x, dropout(a, config.dropout, train, rng)),
                           params[p + "ln1.gamma"], params[p + "ln1.beta"], eps=eps)
            f = _feed_forward(x, params, p + "ffn.")
            x = layer_norm(add(x, dropout(f, config.dropout, train, rng)),
                           params[p + "ln2.gamma"], params[p + "ln2.beta"], eps=eps)
        else:
            h = layer_norm(x, params[p + "ln1.gamma"], params[p + "ln1.beta"], eps=eps)
            a = _attention(h, additive, params, p + "attn.", config, train, rng, attention_sink)
            x = add(x, dropout(a, config.dropout, train, rng))
            h = layer_norm(x, params[p + "ln2.gamma"], params[p + "ln2.beta"], eps=eps)
            x = add(x, dropout(_feed_forward(h, params, p + "ffn."), config.dropout, train, rng))
    if config.norm == "pre" and config.layers > 0:
        x = layer_norm(x, params[prefix + "final.gamma"], params[prefix + "final.beta"], eps=eps)
    return x.reshape(x.shape[1:]) if single else x
