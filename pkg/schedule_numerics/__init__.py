from .tensor import (
    MASKED,
    Graph,
    GraphError,
    Tensor,
    add,
    as_tensor,
    backward,
    concat,
    cross_entropy,
    dropout,
    embedding_lookup,
    layer_norm,
    log_softmax,
    matmul,
    mean,
    mul,
    parameter,
    relu,
    reshape,
    scale,
    softmax,
    sub,
    sum_,
    transpose,
    zero_grad,
)
from .adam import AdamState, adam_step
from .gradcheck import check_gradients, numerical_gradient, relative_error
