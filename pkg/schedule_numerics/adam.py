"""
Adam optimizer with bias-corrected first and second moment estimates.

Parameters and gradients are dicts of numpy arrays keyed by parameter name.
"""

from dataclasses import dataclass, field
from typing import Dict

import numpy as np


@dataclass
class AdamState:
    """
    :param learning_rate: step size alpha
    :param beta1: decay of the first moment estimate
    :param beta2: decay of the second moment estimate
    :param epsilon: denominator guard
    """

    learning_rate: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    t: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ValueError(f"betas must be in [0, 1), got {self.beta1}, {self.beta2}")
        if self.epsilon <= 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")


def adam_step(
    state: AdamState, params: Dict[str, np.ndarray], grads: Dict[str, np.ndarray]
) -> Dict[str, np.ndarray]:
    """
    Update ``params`` in place with one Adam step and return them.

    Parameters without an entry in ``grads`` (or with ``None``) are left
    untouched but still count towards the shared step counter.
    """
    for name, g in grads.items():
        if g is None:
            continue
        if name not in params:
            raise ValueError(f"gradient for unknown parameter {name!r}")
        if np.shape(g) != params[name].shape:
            raise ValueError(
                f"shape mismatch for {name!r}: param {params[name].shape}, grad {np.shape(g)}"
            )

    #bias corrections are shared by every parameter in this step
    state.t += 1
    bc1 = 1.0 - state.beta1 ** state.t
    bc2 = 1.0 - state.beta2 ** state.t
    step_size = state.learning_rate / bc1

    for name, param in params.items():
        g = grads.get(name)
        if g is None:
            continue
        if name not in state.m:
            state.m[name] = np.zeros_like(param)
            state.v[name] = np.zeros_like(param)
        m, v = state.m[name], state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        param -= step_size * m / (np.sqrt(v / bc2) + state.epsilon)
    return params
