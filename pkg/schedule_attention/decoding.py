"""
Incremental causal decoding with cached keys and values.

Running ``decode_step`` on positions 0..t reproduces row t of
``encoder_forward`` under a look-ahead mask (inference mode, no dropout),
while each step costs O(t) instead of a full O(t^2) pass.
"""

from typing import List

import numpy as np
from scipy.special import softmax

from .encoder import EncoderConfig, Params


def _layer_norm(x: np.ndarray, gamma: np.ndarray, beta: np.ndarray, eps: float) -> np.ndarray:
    mu = x.mean(axis=-1, keepdims=True)
    centred = x - mu
    sd = np.sqrt((centred * centred).mean(axis=-1, keepdims=True) + eps)
    return centred / sd * gamma + beta


class CausalDecodeCache:
    """
    Keys and values of every processed position, per layer.

    :param config: encoder configuration
    :param batch: number of sequences decoded in lock-step
    :param max_len: positions to reserve, at most ``config.max_len``
    """

    def __init__(self, config: EncoderConfig, batch: int, max_len: int = None):
        max_len = config.max_len if max_len is None else int(max_len)
        if batch < 1:
            raise ValueError(f"batch must be positive, got {batch}")
        if not 1 <= max_len <= config.max_len:
            raise ValueError(f"max_len must be in 1..{config.max_len}, got {max_len}")
        shape = (batch, config.heads, max_len, config.head_dim)
        self.config = config
        self.batch = batch
        self.max_len = max_len
        self.keys: List[np.ndarray] = [np.zeros(shape) for _ in range(config.layers)]
        self.values: List[np.ndarray] = [np.zeros(shape) for _ in range(config.layers)]
        self.length = 0


def decode_step(x_t: np.ndarray, cache: CausalDecodeCache, params: Params, prefix: str = "encoder.") -> np.ndarray:
    """
    Advance every sequence in the cache by one position.

    :param x_t: B x d_model assembled inputs of the new position
    :return: B x d_model encoder output at that position
    """
    config = cache.config
    x_t = np.asarray(x_t, dtype=np.float64)
    if x_t.shape != (cache.batch, config.d_model):
        raise ValueError(f"x_t must be {(cache.batch, config.d_model)}, got {x_t.shape}")
    if cache.length >= cache.max_len:
        raise ValueError(f"cache is full ({cache.max_len} positions)")

    t = cache.length
    b, heads, dh, eps = cache.batch, config.heads, config.head_dim, config.layer_norm_eps
    h = x_t
    for i in range(config.layers):
        p = f"{prefix}layer{i}."

        def w(name):
            return params[p + name].data

        inp = _layer_norm(h, w("ln1.gamma"), w("ln1.beta"), eps) if config.norm == "pre" else h
        q = (inp @ w("attn.wq") + w("attn.bq")).reshape(b, heads, dh)
        cache.keys[i][:, :, t] = (inp @ w("attn.wk") + w("attn.bk")).reshape(b, heads, dh)
        cache.values[i][:, :, t] = (inp @ w("attn.wv") + w("attn.bv")).reshape(b, heads, dh)
        keys = cache.keys[i][:, :, : t + 1]
        values = cache.values[i][:, :, : t + 1]
        scores = np.einsum("bhd,bhtd->bht", q, keys) / np.sqrt(dh)
        weights = softmax(scores, axis=-1)
        context = np.einsum("bht,bhtd->bhd", weights, values).reshape(b, config.d_model)
        a = context @ w("attn.wo") + w("attn.bo")

        if config.norm == "post":
            h = _layer_norm(h + a, w("ln1.gamma"), w("ln1.beta"), eps)
            f = np.maximum(h @ w("ffn.w1") + w("ffn.b1"), 0.0) @ w("ffn.w2") + w("ffn.b2")
            h = _layer_norm(h + f, w("ln2.gamma"), w("ln2.beta"), eps)
        else:
            h = h + a
            hn = _layer_norm(h, w("ln2.gamma"), w("ln2.beta"), eps)
            h = h + np.maximum(hn @ w("ffn.w1") + w("ffn.b1"), 0.0) @ w("ffn.w2") + w("ffn.b2")
    if config.norm == "pre" and config.layers > 0:
        h = _layer_norm(h, params[prefix + "final.gamma"].data, params[prefix + "final.beta"].data, eps)
    cache.length += 1
    return h
