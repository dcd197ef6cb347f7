"""Tests for the set-to-set calibration module."""

import numpy as np
import pytest

from fscil.exceptions import DimensionError
from fscil.models.calibration import CalibrationParams
from fscil.models.network import Classifier
from fscil.models.tensor import Tensor
from fscil.services.calibration_service import (
    calibrate,
    calibrated_logits,
    calibrated_scores,
    self_attend,
)


def layer_norm_rows(x, eps=1e-5):
    mu = x.mean(axis=-1, keepdims=True)
    var = ((x - mu) ** 2).mean(axis=-1, keepdims=True)
    return (x - mu) / np.sqrt(var + eps)


@pytest.fixture
def params(rng):
    return CalibrationParams.initialize(6, 5, rng, dropout_p=0.3)


class TestSelfAttend:

    def test_permutation_equivariance(self, params, rng):
        x = Tensor(rng.standard_normal((7, 6)))
        out = self_attend(x, params).data
        for _ in range(100):
            perm = rng.permutation(7)
            permuted = self_attend(Tensor(x.data[perm]), params).data
            np.testing.assert_allclose(permuted, out[perm], rtol=0, atol=1e-12)

    def test_zero_output_projection_reduces_to_layer_norm(self, params, rng):
        params.w_fc.data = np.zeros_like(params.w_fc.data)
        x = rng.standard_normal((4, 6))
        np.testing.assert_allclose(self_attend(Tensor(x), params).data, layer_norm_rows(x), atol=1e-12)

        # changing the other elements leaves element 0 untouched
        other = x.copy()
        other[1:] = rng.standard_normal((3, 6))
        np.testing.assert_array_equal(
            self_attend(Tensor(other), params).data[0], self_attend(Tensor(x), params).data[0]
        )

    def test_singleton_attends_to_itself(self, params, rng):
        x = rng.standard_normal((1, 6))
        update = x @ params.w_v.data @ params.w_fc.data
        np.testing.assert_allclose(self_attend(Tensor(x), params).data, layer_norm_rows(x + update), atol=1e-12)

    def test_batched_sets_match_individual_sets(self, params, rng):
        sets = rng.standard_normal((3, 4, 6))
        batched = self_attend(Tensor(sets), params).data
        for i in range(3):
            np.testing.assert_allclose(batched[i], self_attend(Tensor(sets[i]), params).data, atol=1e-12)

    def test_dropout_only_in_train_mode(self, params, rng):
        x = Tensor(rng.standard_normal((4, 6)))
        np.testing.assert_array_equal(self_attend(x, params).data, self_attend(x, params).data)
        trained = self_attend(x, params, train=True, rng=np.random.default_rng(1)).data
        assert not np.allclose(trained, self_attend(x, params).data)

    @pytest.mark.parametrize("position", ["pre_norm", "post_norm", "branch"])
    def test_dropout_positions_agree_in_eval_mode(self, params, rng, position):
        x = Tensor(rng.standard_normal((4, 6)))
        reference = self_attend(x, params).data
        params.dropout_position = position
        np.testing.assert_allclose(self_attend(x, params).data, reference, atol=1e-12)

    def test_dimension_mismatch(self, params, rng):
        with pytest.raises(DimensionError):
            self_attend(Tensor(rng.standard_normal((4, 5))), params)


class TestCalibrate:

    def test_shapes(self, params, rng):
        w = Classifier.initialize(6, [0, 1, 2], rng)
        weights, queries = calibrate(w, Tensor(rng.standard_normal((5, 6))), params)
        assert weights.shape == (5, 3, 6)
        assert queries.shape == (5, 6)
        assert calibrated_logits(weights, queries).shape == (5, 3)

    def test_instances_are_independent(self, params, rng):
        w = Classifier.initialize(6, [0, 1, 2], rng)
        emb = rng.standard_normal((4, 6))
        batched = calibrated_scores(w, Tensor(emb), params).data
        for i in range(4):
            alone = calibrated_scores(w, Tensor(emb[i : i + 1]), params).data
            np.testing.assert_allclose(batched[i], alone[0], rtol=0, atol=1e-12)

    def test_identical_instances_score_identically(self, params, rng):
        w = Classifier.initialize(6, [0, 1], rng)
        row = rng.standard_normal(6)
        logits = calibrated_scores(w, Tensor(np.stack([row, row])), params).data
        np.testing.assert_array_equal(logits[0], logits[1])

    def test_calibration_matches_single_set(self, params, rng):
        w = Classifier.initialize(6, [0, 1], rng)
        emb = rng.standard_normal((1, 6))
        weights, queries = calibrate(w, Tensor(emb), params)
        joint = self_attend(Tensor(np.vstack([w.weights.data.T, emb])), params).data
        np.testing.assert_allclose(weights.data[0], joint[:2], atol=1e-12)
        np.testing.assert_allclose(queries.data[0], joint[2], atol=1e-12)

    def test_column_order_permutes_logits(self, params, rng):
        w = Classifier.initialize(6, [10, 11, 12, 13, 14], rng)
        emb = Tensor(rng.standard_normal((8, 6)))
        logits = calibrated_scores(w, emb, params).data
        predicted = [w.class_ids[j] for j in np.argmax(logits, axis=1)]
        for _ in range(20):
            perm = rng.permutation(5)
            shuffled = Classifier(Tensor(w.weights.data[:, perm]), [w.class_ids[j] for j in perm])
            permuted = calibrated_scores(shuffled, emb, params).data
            np.testing.assert_allclose(permuted, logits[:, perm], rtol=0, atol=1e-12)
            assert [shuffled.class_ids[j] for j in np.argmax(permuted, axis=1)] == predicted

    def test_zero_query_gives_zero_logits(self, rng):
        weights = Tensor(rng.standard_normal((2, 3, 4)))
        assert not calibrated_logits(weights, Tensor(np.zeros((2, 4)))).data.any()

    def test_embedding_dimension_mismatch(self, params, rng):
        w = Classifier.initialize(6, [0, 1], rng)
        with pytest.raises(DimensionError):
            calibrate(w, Tensor(rng.standard_normal((2, 5))), params)
