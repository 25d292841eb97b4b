"""Central finite-difference oracle for the autodiff primitives."""

from typing import Callable, Dict, Sequence

import numpy as np

from .tensor import Tensor, backward


def numerical_gradient(fn: Callable[[], Tensor], array: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """
    Central differences of the scalar ``fn()`` with respect to ``array``,
    which is perturbed in place and restored.
    """
    grad = np.zeros_like(array)
    flat = array.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        original = flat[i]
        flat[i] = original + h
        plus = float(fn().data)
        flat[i] = original - h
        minus = float(fn().data)
        flat[i] = original
        gflat[i] = (plus - minus) / (2.0 * h)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    diff = np.linalg.norm(np.ravel(analytic) - np.ravel(numeric))
    scale = np.linalg.norm(np.ravel(analytic)) + np.linalg.norm(np.ravel(numeric))
    return float(diff / max(scale, 1e-12))


def check_gradients(
    fn: Callable[[], Tensor], inputs: Sequence[Tensor], h: float = 1e-5
) -> Dict[int, float]:
    """
    Compare backward() against central differences for each input tensor.

    :param fn: builds the scalar loss from ``inputs``
    :param inputs: leaf tensors with ``requires_grad=True``
    :return: input index -> relative error
    """
    grads = backward(fn(), accumulate=False)
    errors = {}
    for i, tensor in enumerate(inputs):
        analytic = grads.get(tensor, np.zeros_like(tensor.data))
        numeric = numerical_gradient(fn, tensor.data, h=h)
        errors[i] = relative_error(analytic, numeric)
    return errors
