"""
Tests for the autodiff tensor, its primitives and the Adam update.
"""

import os
import sys

import numpy as np
import pytest

# Add the parent directory to the path so we can import our modules
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from schedule_numerics import (
    AdamState,
    GraphError,
    Tensor,
    adam_step,
    backward,
    check_gradients,
    concat,
    cross_entropy,
    dropout,
    embedding_lookup,
    layer_norm,
    log_softmax,
    matmul,
    parameter,
    relu,
    softmax,
    zero_grad,
)

TOLERANCE = 1e-5


def _weights(rng, shape):
    return Tensor(rng.normal(size=shape))


def _case_matmul(rng):
    a, b = parameter(rng.normal(size=(3, 4))), parameter(rng.normal(size=(4, 2)))
    w = _weights(rng, (3, 2))
    return (lambda: (matmul(a, b) * w).sum()), [a, b]


def _case_batched_matmul(rng):
    a, b = parameter(rng.normal(size=(2, 3, 4))), parameter(rng.normal(size=(4, 5)))
    w = _weights(rng, (2, 3, 5))
    return (lambda: (matmul(a, b) * w).sum()), [a, b]


def _case_softmax_masked(rng):
    a = parameter(rng.normal(size=(4, 5)))
    mask = np.where(np.tril(np.ones((4, 5))) > 0, 0.0, -np.inf)
    w = _weights(rng, (4, 5))
    return (lambda: (softmax(a, axis=-1, mask=mask) * w).sum()), [a]


def _case_log_softmax(rng):
    a = parameter(rng.normal(size=(3, 6)))
    w = _weights(rng, (3, 6))
    return (lambda: (log_softmax(a) * w).sum()), [a]


def _case_layer_norm(rng):
    a = parameter(rng.normal(size=(3, 8)))
    gamma, beta = parameter(rng.normal(size=8)), parameter(rng.normal(size=8))
    w = _weights(rng, (3, 8))
    return (lambda: (layer_norm(a, gamma, beta) * w).sum()), [a, gamma, beta]


def _case_relu_concat(rng):
    a, b = parameter(rng.normal(size=(2, 3))), parameter(rng.normal(size=(2, 4)))
    w = _weights(rng, (2, 7))
    return (lambda: (relu(concat([a, b], axis=-1)) * w).sum()), [a, b]


def _case_embedding_cross_entropy(rng):
    table = parameter(rng.normal(size=(6, 4)))
    proj = parameter(rng.normal(size=(4, 5)))
    idx = rng.integers(0, 6, size=7)
    targets = rng.integers(0, 5, size=7)
    targets[0] = -1
    return (lambda: cross_entropy(matmul(embedding_lookup(table, idx), proj), targets, ignore_code=-1)), [table, proj]


CASES = [
    _case_matmul,
    _case_batched_matmul,
    _case_softmax_masked,
    _case_log_softmax,
    _case_layer_norm,
    _case_relu_concat,
    _case_embedding_cross_entropy,
]


@pytest.mark.parametrize("seed", range(8))
@pytest.mark.parametrize("case", CASES, ids=lambda c: c.__name__[6:])
def test_gradients_match_finite_differences(case, seed):
    """Backward agrees with central differences on seeded random inputs."""
    fn, inputs = case(np.random.default_rng(seed))
    errors = check_gradients(fn, inputs)
    assert max(errors.values()) < TOLERANCE, errors


class TestGraph:
    def test_shared_node_accumulates(self):
        x = parameter([1.5, -2.0])
        y = (x * x + x).sum()
        grads = backward(y)
        np.testing.assert_allclose(grads[x], 2 * x.data + 1)

    def test_accumulate_into_grad(self):
        x = parameter([1.0, 2.0])
        backward((x * 3.0).sum())
        backward((x * 2.0).sum())
        np.testing.assert_allclose(x.grad, [5.0, 5.0])
        zero_grad([x])
        assert x.grad is None

    def test_non_scalar_loss(self):
        x = parameter(np.ones(3))
        with pytest.raises(GraphError, match="scalar"):
            backward(x * 2.0)

    def test_loss_without_parameters(self):
        with pytest.raises(GraphError, match="requires gradients"):
            backward(Tensor(1.0))

    def test_cycle_detected(self):
        node = Tensor(1.0, requires_grad=True, backward_fn=lambda g: (g,))
        node._parents = (node,)
        with pytest.raises(GraphError, match="cycle"):
            backward(node)

    def test_inference_builds_no_graph(self):
        a, b = Tensor(np.ones((2, 2))), Tensor(np.ones((2, 2)))
        out = matmul(a, b)
        assert not out.requires_grad
        assert out._parents == ()


class TestPrimitives:
    def test_softmax_masked_entries_are_exactly_zero(self):
        mask = np.array([[0.0, -np.inf, 0.0]])
        out = softmax(Tensor([[3.0, 100.0, -1.0]]), mask=mask)
        assert out.data[0, 1] == 0.0
        np.testing.assert_allclose(out.data.sum(), 1.0)

    def test_softmax_rejects_fully_masked_row(self):
        with pytest.raises(ValueError, match="no unmasked"):
            softmax(Tensor(np.zeros((1, 2))), mask=np.full((1, 2), -np.inf))

    def test_softmax_rejects_bad_mask_values(self):
        with pytest.raises(ValueError, match="0 or -inf"):
            softmax(Tensor(np.zeros((1, 2))), mask=np.array([[0.0, 1.0]]))

    def test_layer_norm_output_moments(self):
        out = layer_norm(Tensor(np.random.default_rng(0).normal(3.0, 2.0, size=(4, 16)))).data
        np.testing.assert_allclose(out.mean(axis=-1), 0.0, atol=1e-12)
        np.testing.assert_allclose(out.std(axis=-1), 1.0, atol=1e-6)

    def test_embedding_out_of_range(self):
        with pytest.raises(ValueError, match="out of range"):
            embedding_lookup(Tensor(np.zeros((3, 2))), np.array([3]))

    def test_dropout_identity_outside_training(self):
        x = Tensor(np.ones((4, 4)))
        assert dropout(x, 0.5, train=False) is x
        with pytest.raises(ValueError, match="random generator"):
            dropout(x, 0.5, train=True)

    def test_dropout_keeps_expectation(self):
        x = Tensor(np.ones(20000))
        out = dropout(x, 0.25, train=True, rng=np.random.default_rng(1)).data
        assert set(np.unique(out)) <= {0.0, 1.0 / 0.75}
        assert abs(out.mean() - 1.0) < 0.03

    def test_cross_entropy_uniform_logits(self):
        loss = cross_entropy(Tensor(np.zeros((5, 6))), np.arange(5))
        np.testing.assert_allclose(loss.data, np.log(6))

    def test_cross_entropy_all_ignored(self):
        with pytest.raises(ValueError, match="every row is ignored"):
            cross_entropy(Tensor(np.zeros((2, 3))), [-1, -1], ignore_code=-1)

    def test_matmul_shape_mismatch(self):
        with pytest.raises(ValueError):
            matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((2, 3))))


class TestAdam:
    def test_first_step_moves_by_learning_rate(self):
        params = {"w": np.array([1.0, -1.0, 0.5])}
        grads = {"w": np.array([0.3, -4.0, 1e-3])}
        adam_step(AdamState(learning_rate=0.01), params, grads)
        np.testing.assert_allclose(params["w"], [0.99, -0.99, 0.49], atol=1e-6)

    def test_missing_gradient_leaves_parameter(self):
        params = {"a": np.ones(2), "b": np.ones(2)}
        state = AdamState()
        adam_step(state, params, {"a": np.ones(2), "b": None})
        np.testing.assert_array_equal(params["b"], np.ones(2))
        assert state.t == 1

    def test_shape_mismatch(self):
        with pytest.raises(ValueError, match="shape mismatch"):
            adam_step(AdamState(), {"a": np.ones(2)}, {"a": np.ones(3)})

    def test_minimises_quadratic(self):
        w = parameter([5.0, -3.0])
        state = AdamState(learning_rate=0.1)
        for _ in range(500):
            zero_grad([w])
            backward(((w - 1.0) * (w - 1.0)).sum())
            adam_step(state, {"w": w.data}, {"w": w.grad})
        np.testing.assert_allclose(w.data, [1.0, 1.0], atol=5e-2)
