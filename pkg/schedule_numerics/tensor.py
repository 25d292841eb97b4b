"""
Dense float64 tensors with reverse-mode automatic differentiation.

Each operation returns a new Tensor that remembers its parents and a closure
mapping the output gradient to parent gradients. Operations whose inputs do
not require gradients record nothing, so inference builds no graph.
"""

import logging
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import logsumexp

logger = logging.getLogger(__name__)

MASKED = -np.inf


class GraphError(ValueError):
    pass


class Tensor:
    """
    Row-major float64 array plus autodiff bookkeeping.

    :param data: array-like values
    :param requires_grad: whether gradients are tracked for this tensor
    """

    def __init__(self, data, requires_grad=False, parents=(), backward_fn=None, op=""):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self._parents: Tuple["Tensor", ...] = tuple(parents)
        self._backward_fn: Optional[Callable] = backward_fn
        self.op = op

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise ValueError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def __repr__(self):
        return f"Tensor(shape={self.shape}, op={self.op!r}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes or None)

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis=axis, keepdims=keepdims)

    def backward(self):
        return backward(self)


def as_tensor(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def parameter(data) -> Tensor:
    return Tensor(np.array(data, dtype=np.float64), requires_grad=True)


def _node(data, parents: Sequence[Tensor], backward_fn, op: str) -> Tensor:
    if any(p.requires_grad for p in parents):
        return Tensor(data, requires_grad=True, parents=parents, backward_fn=backward_fn, op=op)
    return Tensor(data, op=op)


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _broadcast_shape(a: Tensor, b: Tensor, op: str) -> Tuple[int, ...]:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ValueError(f"{op}: shape mismatch {a.shape} vs {b.shape}") from None


# ----------------------------------------------------------------------
# Graph traversal
# ----------------------------------------------------------------------


@dataclass
class Graph:
    """Operation records reachable from ``output``, inputs first."""

    output: Tensor
    order: List[Tensor]

    @classmethod
    def from_output(cls, output: Tensor) -> "Graph":
        order: List[Tensor] = []
        state: Dict[int, int] = {}  # 1 = on stack, 2 = done
        stack = [(output, False)]
        while stack:
            node, expanded = stack.pop()
            key = id(node)
            if expanded:
                state[key] = 2
                order.append(node)
                continue
            if state.get(key) == 2:
                continue
            if state.get(key) == 1:
                raise GraphError("computation graph contains a cycle")
            state[key] = 1
            stack.append((node, True))
            for parent in node._parents:
                pstate = state.get(id(parent))
                if pstate == 1:
                    raise GraphError("computation graph contains a cycle")
                if pstate is None:
                    stack.append((parent, False))
        return cls(output=output, order=order)


def backward(loss: Tensor, accumulate: bool = True) -> Dict[Tensor, np.ndarray]:
    """
    Reverse-mode sweep from a scalar loss.

    :param loss: scalar tensor produced by tracked operations
    :param accumulate: add the gradients into ``tensor.grad`` of the leaves
    :return: mapping leaf tensor -> gradient for every leaf requiring grad
    """
    if loss.data.size != 1:
        raise GraphError(f"loss must be a scalar, got shape {loss.shape}")
    if not loss.requires_grad:
        raise GraphError("loss does not depend on any tensor that requires gradients")

    graph = Graph.from_output(loss)
    pending: Dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    leaves: Dict[Tensor, np.ndarray] = {}
    for node in reversed(graph.order):
        grad = pending.pop(id(node), None)
        if grad is None:
            continue
        if node._backward_fn is None:
            if node.requires_grad:
                leaves[node] = grad
            continue
        parent_grads = node._backward_fn(grad)
        for parent, pgrad in zip(node._parents, parent_grads):
            if pgrad is None or not parent.requires_grad:
                continue
            key = id(parent)
            if key in pending:
                pending[key] = pending[key] + pgrad
            else:
                pending[key] = pgrad

    if accumulate:
        for leaf, grad in leaves.items():
            leaf.grad = grad.copy() if leaf.grad is None else leaf.grad + grad
    return leaves


def zero_grad(params) -> None:
    values = params.values() if isinstance(params, dict) else params
    for p in values:
        p.grad = None


# ----------------------------------------------------------------------
# Elementwise and shape primitives
# ----------------------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "add")

    def backward_fn(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _node(a.data + b.data, (a, b), backward_fn, "add")


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "sub")

    def backward_fn(g):
        return _unbroadcast(g, a.shape), -_unbroadcast(g, b.shape)

    return _node(a.data - b.data, (a, b), backward_fn, "sub")


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "mul")

    def backward_fn(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _node(a.data * b.data, (a, b), backward_fn, "mul")


def scale(a, factor: float) -> Tensor:
    a = as_tensor(a)
    factor = float(factor)

    def backward_fn(g):
        return (g * factor,)

    return _node(a.data * factor, (a,), backward_fn, "scale")


def matmul(a, b) -> Tensor:
    """Batched matrix product with numpy broadcasting of leading dims."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ValueError(f"matmul needs operands with >= 2 dims, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ValueError(f"matmul: shape mismatch {a.shape} @ {b.shape}")
    try:
        np.broadcast_shapes(a.shape[:-2], b.shape[:-2])
    except ValueError:
        raise ValueError(f"matmul: batch shapes {a.shape[:-2]} and {b.shape[:-2]} do not broadcast") from None

    def backward_fn(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2)) if a.requires_grad else None
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g) if b.requires_grad else None
        return (
            None if ga is None else _unbroadcast(ga, a.shape),
            None if gb is None else _unbroadcast(gb, b.shape),
        )

    return _node(np.matmul(a.data, b.data), (a, b), backward_fn, "matmul")


def relu(a) -> Tensor:
    a = as_tensor(a)
    positive = a.data > 0

    def backward_fn(g):
        return (g * positive,)

    return _node(np.where(positive, a.data, 0.0), (a,), backward_fn, "relu")


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    original = a.shape

    def backward_fn(g):
        return (g.reshape(original),)

    return _node(a.data.reshape(shape), (a,), backward_fn, "reshape")


def transpose(a, axes=None) -> Tensor:
    a = as_tensor(a)
    axes = tuple(range(a.ndim))[::-1] if axes is None else tuple(axes)
    if sorted(axes) != list(range(a.ndim)):
        raise ValueError(f"transpose: invalid axes {axes} for {a.ndim}-d tensor")
    inverse = tuple(np.argsort(axes))

    def backward_fn(g):
        return (np.transpose(g, inverse),)

    return _node(np.transpose(a.data, axes), (a,), backward_fn, "transpose")


def _check_axis(a: Tensor, axis: int) -> int:
    if not -a.ndim <= axis < a.ndim:
        raise ValueError(f"invalid axis {axis} for tensor of shape {a.shape}")
    return axis % a.ndim


def sum_(a, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)
    if axis is not None:
        axis = _check_axis(a, axis)

    def backward_fn(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _node(a.data.sum(axis=axis, keepdims=keepdims), (a,), backward_fn, "sum")


def mean(a, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)
    count = a.data.size if axis is None else a.shape[_check_axis(a, axis)]
    return scale(sum_(a, axis=axis, keepdims=keepdims), 1.0 / count)


def concat(tensors: Sequence, axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise ValueError("concat needs at least one tensor")
    axis = _check_axis(tensors[0], axis)
    for t in tensors[1:]:
        if t.ndim != tensors[0].ndim or any(
            t.shape[i] != tensors[0].shape[i] for i in range(t.ndim) if i != axis
        ):
            raise ValueError(f"concat: shape mismatch {tensors[0].shape} vs {t.shape} on axis {axis}")
    splits = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def backward_fn(g):
        return tuple(np.split(g, splits, axis=axis))

    return _node(np.concatenate([t.data for t in tensors], axis=axis), tensors, backward_fn, "concat")


# ----------------------------------------------------------------------
# Network primitives
# ----------------------------------------------------------------------


def softmax(a, axis: int = -1, mask=None) -> Tensor:
    """
    Softmax with an optional additive mask of 0 / -inf entries. Masked
    entries get probability exactly 0; a row with every entry masked is an error.
    """
    a = as_tensor(a)
    axis = _check_axis(a, axis)
    z = a.data
    if mask is not None:
        mask = np.asarray(mask, dtype=np.float64)
        if not np.all((mask == 0.0) | np.isneginf(mask)):
            raise ValueError("softmax mask entries must be 0 or -inf")
        try:
            np.broadcast_shapes(mask.shape, z.shape)
        except ValueError:
            raise ValueError(f"softmax: mask shape {mask.shape} does not match {z.shape}") from None
        mask_axis = axis - (z.ndim - mask.ndim)
        if mask_axis >= 0:
            fully_masked = np.any(np.all(np.isneginf(mask), axis=mask_axis))
        else:
            fully_masked = np.any(np.isneginf(mask))
        if fully_masked:
            raise ValueError("softmax: a row has no unmasked position")
        z = z + mask
    peak = np.max(z, axis=axis, keepdims=True)
    e = np.exp(z - peak)
    y = e / np.sum(e, axis=axis, keepdims=True)

    def backward_fn(g):
        return (y * (g - np.sum(g * y, axis=axis, keepdims=True)),)

    return _node(y, (a,), backward_fn, "softmax")


def log_softmax(a, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    axis = _check_axis(a, axis)
    out = a.data - logsumexp(a.data, axis=axis, keepdims=True)
    probs = np.exp(out)

    def backward_fn(g):
        return (g - probs * np.sum(g, axis=axis, keepdims=True),)

    return _node(out, (a,), backward_fn, "log_softmax")


def layer_norm(a, gamma=None, beta=None, axis: int = -1, eps: float = 1e-9) -> Tensor:
    """
    Normalise ``a`` to zero mean and unit variance along ``axis``, then apply
    the optional affine ``gamma``/``beta`` (broadcast against ``a``).
    """
    a = as_tensor(a)
    axis = _check_axis(a, axis)
    mu = a.data.mean(axis=axis, keepdims=True)
    centred = a.data - mu
    sd = np.sqrt((centred * centred).mean(axis=axis, keepdims=True) + eps)
    xhat = centred / sd
    parents = [a]
    out = xhat
    if gamma is not None:
        gamma = as_tensor(gamma)
        parents.append(gamma)
        out = out * gamma.data
    if beta is not None:
        beta = as_tensor(beta)
        parents.append(beta)
        out = out + beta.data

    def backward_fn(g):
        g_hat = g * gamma.data if gamma is not None else g
        dx = (
            g_hat
            - g_hat.mean(axis=axis, keepdims=True)
            - xhat * (g_hat * xhat).mean(axis=axis, keepdims=True)
        ) / sd
        grads = [dx]
        if gamma is not None:
            grads.append(_unbroadcast(g * xhat, gamma.shape))
        if beta is not None:
            grads.append(_unbroadcast(g, beta.shape))
        return tuple(grads)

    return _node(out, parents, backward_fn, "layer_norm")


def embedding_lookup(table, indices) -> Tensor:
    """Rows of ``table`` (V x E) selected by an integer array of any shape."""
    table = as_tensor(table)
    if table.ndim != 2:
        raise ValueError(f"embedding table must be 2-d, got shape {table.shape}")
    indices = np.asarray(indices)
    if not np.issubdtype(indices.dtype, np.integer):
        raise ValueError("embedding indices must be integers")
    if indices.size and (indices.min() < 0 or indices.max() >= table.shape[0]):
        raise ValueError(
            f"embedding index out of range 0..{table.shape[0] - 1} "
            f"(got {indices.min()}..{indices.max()})"
        )

    def backward_fn(g):
        grad = np.zeros_like(table.data)
        np.add.at(grad, indices.reshape(-1), g.reshape(-1, table.shape[1]))
        return (grad,)

    return _node(table.data[indices], (table,), backward_fn, "embedding")


def dropout(a, rate: float, train: bool, rng: Optional[np.random.Generator] = None) -> Tensor:
    """Inverted dropout; identity when not training or ``rate == 0``."""
    a = as_tensor(a)
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if not train or rate == 0.0:
        return a
    if rng is None:
        raise ValueError("dropout in training mode needs a random generator")
    keep = (rng.random(a.shape) >= rate) / (1.0 - rate)

    def backward_fn(g):
        return (g * keep,)

    return _node(a.data * keep, (a,), backward_fn, "dropout")


def cross_entropy(logits, targets, ignore_code: Optional[int] = None) -> Tensor:
    """
    Mean negative log-likelihood over the rows whose target is not
    ``ignore_code``. Ignored rows contribute neither loss nor gradient.
    """
    logits = as_tensor(logits)
    if logits.ndim != 2:
        raise ValueError(f"logits must be N x K, got shape {logits.shape}")
    targets = np.asarray(targets, dtype=np.int64).reshape(-1)
    n, k = logits.shape
    if targets.shape[0] != n:
        raise ValueError(f"got {targets.shape[0]} targets for {n} logit rows")
    keep = np.ones(n, dtype=bool) if ignore_code is None else targets != ignore_code
    kept = targets[keep]
    if kept.size and (kept.min() < 0 or kept.max() >= k):
        raise ValueError(f"targets must be in 0..{k - 1} or equal ignore_code")
    count = int(keep.sum())
    if count == 0:
        raise ValueError("cross_entropy: every row is ignored")

    rows = np.flatnonzero(keep)
    logp = logits.data[rows] - logsumexp(logits.data[rows], axis=1, keepdims=True)
    loss = -logp[np.arange(count), kept].mean()

    def backward_fn(g):
        grad = np.zeros_like(logits.data)
        p = np.exp(logp)
        p[np.arange(count), kept] -= 1.0
        grad[rows] = p * (float(g) / count)
        return (grad,)

    return _node(np.asarray(loss), (logits,), backward_fn, "cross_entropy")
