"""Tests for differentiable operations."""

import math

import numpy as np
import pytest

from fscil.exceptions import ContractError, DimensionError, LabelRangeError, NumericError
from fscil.models import functional as F
from fscil.models.gradcheck import grad_check
from fscil.models.tensor import Tensor, backward, use_tape


def param(rng, *shape):
    return Tensor(rng.standard_normal(shape), requires_grad=True)


def weighted_sum(out, rng):
    """Scalar projection of an output with fixed random weights."""
    weights = Tensor(rng.standard_normal(out.shape))
    return lambda t: F.sum_all(F.mul(t, weights))


class TestArithmetic:

    def test_add_row_bias_gradient(self):
        x = Tensor(np.ones((2, 3)), requires_grad=True)
        b = Tensor([1.0, 2.0, 3.0], requires_grad=True)
        with use_tape():
            out = F.add(x, b)
            backward(F.sum_all(out))
        np.testing.assert_allclose(out.data, [[2, 3, 4], [2, 3, 4]])
        np.testing.assert_allclose(b.grad, [2.0, 2.0, 2.0])

    def test_add_shape_mismatch(self):
        with pytest.raises(DimensionError):
            F.add(Tensor(np.ones((2, 3))), Tensor(np.ones((3, 2))))

    def test_relu(self):
        assert F.relu(Tensor([-1.0, 0.0, 2.0])).values == [0.0, 0.0, 2.0]


class TestMatmul:

    def test_identity(self):
        out = F.matmul(Tensor(np.eye(2)), Tensor([[1.0, 2.0], [3.0, 4.0]]))
        assert out.values == [1.0, 2.0, 3.0, 4.0]

    def test_hand_computed(self):
        assert F.matmul(Tensor([[1.0, 2.0]]), Tensor([[3.0], [4.0]])).values == [11.0]

    def test_mismatch_names_both_shapes(self):
        with pytest.raises(DimensionError, match=r"\(2, 3\).*\(2, 3\)"):
            F.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))

    def test_gradient(self, rng):
        a, b = param(rng, 5, 4), param(rng, 4, 3)
        project = weighted_sum(Tensor(np.zeros((5, 3))), rng)
        assert grad_check(lambda: project(F.matmul(a, b)), [a, b]) < 1e-6

    def test_bmm_gradient(self, rng):
        a, b = param(rng, 2, 3, 4), param(rng, 2, 4, 5)
        project = weighted_sum(Tensor(np.zeros((2, 3, 5))), rng)
        assert grad_check(lambda: project(F.bmm(a, b)), [a, b]) < 1e-6


class TestShapes:

    def test_take_accumulates_repeated_indices(self):
        x = Tensor([1.0, 2.0, 3.0], requires_grad=True)
        with use_tape():
            backward(F.sum_all(F.take(x, [0, 0, 2])))
        np.testing.assert_allclose(x.grad, [2.0, 0.0, 1.0])

    def test_take_out_of_range(self):
        with pytest.raises(DimensionError):
            F.take(Tensor([1.0, 2.0]), [2])

    def test_concat_stack_transpose_reshape_gradients(self, rng):
        a, b = param(rng, 2, 3), param(rng, 2, 2)
        project = weighted_sum(Tensor(np.zeros((5, 2))), rng)

        def f():
            joined = F.concat([a, b], axis=1)
            return project(F.transpose(F.reshape(joined, (2, 5))))

        assert grad_check(f, [a, b]) < 1e-6

    def test_repeat_batch_gradient(self, rng):
        x = param(rng, 3, 2)
        project = weighted_sum(Tensor(np.zeros((4, 3, 2))), rng)
        assert grad_check(lambda: project(F.repeat_batch(x, 4)), [x]) < 1e-6

    def test_stack_and_mean_gradient(self, rng):
        a, b = param(rng, 3), param(rng, 3)
        project = weighted_sum(Tensor(np.zeros(2)), rng)
        assert grad_check(lambda: project(F.mean(F.stack([a, b], axis=0), axis=1)), [a, b]) < 1e-6


class TestSoftmax:

    def test_symmetric(self):
        np.testing.assert_allclose(F.softmax(Tensor([0.0, 0.0])).data, [0.5, 0.5])

    def test_large_inputs_do_not_overflow(self):
        np.testing.assert_allclose(F.softmax(Tensor([1000.0] * 3)).data, [1 / 3] * 3)

    def test_matches_exp_normalize(self):
        expected = np.exp([1.0, 2.0, 3.0]) / np.exp([1.0, 2.0, 3.0]).sum()
        np.testing.assert_allclose(F.softmax(Tensor([1.0, 2.0, 3.0])).data, expected, atol=1e-15)

    def test_rows_sum_to_one(self, rng):
        probs = F.softmax(Tensor(rng.standard_normal((4, 7)) * 10), axis=1).data
        np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-12)
        assert np.all(probs >= 0)

    def test_non_finite_input(self):
        with pytest.raises(NumericError):
            F.softmax(Tensor([0.0, np.nan]))

    def test_gradients(self, rng):
        x = param(rng, 3, 4)
        project = weighted_sum(x, rng)
        assert grad_check(lambda: project(F.softmax(x, axis=1)), [x]) < 1e-6
        assert grad_check(lambda: project(F.log_softmax(x, axis=1)), [x]) < 1e-6


class TestCrossEntropy:

    def test_uniform_two_way(self):
        loss = F.cross_entropy(Tensor([[0.0, 0.0]]), [0])
        assert loss.item() == pytest.approx(math.log(2), abs=1e-12)

    def test_confident_prediction(self):
        loss = F.cross_entropy(Tensor([[10.0, -10.0]]), [0])
        assert loss.item() == pytest.approx(math.log1p(math.exp(-20.0)), rel=1e-6)

    def test_decreases_with_margin(self):
        losses = [F.cross_entropy(Tensor([[m, 0.0, 0.0]]), [0]).item() for m in (0.5, 1.0, 2.0, 4.0)]
        assert losses == sorted(losses, reverse=True)

    def test_label_out_of_range(self):
        with pytest.raises(LabelRangeError):
            F.cross_entropy(Tensor([[0.0, 1.0]]), [2])
        with pytest.raises(IndexError):
            F.cross_entropy(Tensor([[0.0, 1.0]]), [-1])

    def test_label_count_mismatch(self):
        with pytest.raises(DimensionError):
            F.cross_entropy(Tensor([[0.0, 1.0]]), [0, 1])

    def test_gradient(self, rng):
        x = param(rng, 4, 3)
        assert grad_check(lambda: F.cross_entropy(x, [0, 2, 1, 2]), [x]) < 1e-6


class TestLayerNorm:

    def test_constant_row_collapses_to_beta(self):
        out = F.layer_norm(Tensor([[5.0, 5.0, 5.0]]), Tensor(np.ones(3)), Tensor(np.zeros(3)))
        np.testing.assert_allclose(out.data, [[0.0, 0.0, 0.0]])

    def test_hand_normalized(self):
        out = F.layer_norm(Tensor([[1.0, 2.0, 3.0]]), Tensor(np.ones(3)), Tensor(np.zeros(3)))
        root = math.sqrt(1.5)
        np.testing.assert_allclose(out.data, [[-root, 0.0, root]], atol=1e-4)

    def test_parameter_shape_mismatch(self):
        with pytest.raises(DimensionError):
            F.layer_norm(Tensor(np.ones((2, 3))), Tensor(np.ones(2)), Tensor(np.zeros(2)))

    def test_gradient(self, rng):
        x, gamma, beta = param(rng, 2, 3, 5), param(rng, 5), param(rng, 5)
        project = weighted_sum(x, rng)
        assert grad_check(lambda: project(F.layer_norm(x, gamma, beta)), [x, gamma, beta]) < 1e-5


class TestDropout:

    def test_identity_in_eval_mode(self):
        x = Tensor([1.0, 2.0])
        assert F.dropout(x, 0.5, None, train=False) is x

    def test_train_mode_scales_survivors(self, rng):
        x = Tensor(np.ones(1000))
        out = F.dropout(x, 0.25, rng, train=True).data
        assert set(np.unique(out)) <= {0.0, 1.0 / 0.75}
        assert 0 < np.count_nonzero(out) < 1000

    def test_train_mode_needs_generator(self):
        with pytest.raises(ValueError):
            F.dropout(Tensor([1.0]), 0.5, None, train=True)
