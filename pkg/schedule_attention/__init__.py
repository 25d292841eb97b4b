from .masks import AttentionMask, full_mask, imputation_mask, lookahead_mask
from .encoder import (
    EncoderConfig,
    InputFeatureSpec,
    assemble_inputs,
    encoder_forward,
    feature_concat,
    init_encoder_params,
    init_input_params,
    positional_encoding,
    positional_rows,
)
from .decoding import CausalDecodeCache, decode_step
