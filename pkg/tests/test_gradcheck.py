"""Finite-difference checks of whole losses."""

import numpy as np

from fscil.models import functional as F
from fscil.models.calibration import CalibrationParams
from fscil.models.dataset import Dataset
from fscil.models.gradcheck import grad_check, numerical_gradient
from fscil.models.network import Classifier, EmbeddingNet
from fscil.models.tensor import Tensor, make_node
from fscil.services.calibration_service import calibrated_scores
from fscil.services.network_service import compute_prototypes, embed, raw_logits, replace_classifier


class TestGradCheck:

    def test_quadratic(self):
        w = Tensor([1.0, 2.0], requires_grad=True)
        assert grad_check(lambda: F.sum_all(F.mul(w, w)), [w]) < 1e-8

    def test_numerical_gradient_restores_parameter(self):
        w = Tensor([1.0, 2.0], requires_grad=True)
        grad = numerical_gradient(lambda: F.sum_all(F.mul(w, w)), w)
        np.testing.assert_allclose(grad, [2.0, 4.0], rtol=1e-8)
        assert w.values == [1.0, 2.0]

    def test_detects_wrong_gradient(self):
        x = Tensor([1.0, -2.0, 0.5], requires_grad=True)

        def broken_square():
            # backward omits the factor 2
            squared = make_node(x.data**2, (x,), lambda g: (g * x.data,))
            return F.sum_all(squared)

        assert grad_check(broken_square, [x]) > 0.1

    def test_leaves_no_gradient_behind(self):
        w = Tensor([1.0, 2.0], requires_grad=True)
        grad_check(lambda: F.sum_all(F.mul(w, w)), [w])
        assert w.grad is None


class TestModelLosses:

    def test_mlp_cross_entropy(self):
        rng = np.random.default_rng(1)
        net = EmbeddingNet.initialize([3, 6, 2], rng)
        x = rng.standard_normal((4, 3))
        params = list(net.parameters().values())
        err = grad_check(lambda: F.cross_entropy(embed(net, x), [0, 1, 1, 0]), params)
        assert err < 1e-4

    def test_calibrated_incremental_loss(self):
        """Prototypes, column replacement and calibration on a 3-class, d=8 toy."""
        rng = np.random.default_rng(2)
        net = EmbeddingNet.initialize([5, 8], rng)
        classifier = Classifier.initialize(8, [0, 1], rng)
        calibration = CalibrationParams.initialize(8, 6, rng, dropout_p=0.0)
        support = Dataset(rng.standard_normal((3, 5)), [2, 2, 2], num_classes=3)
        query = rng.standard_normal((6, 5))
        labels = [0, 0, 1, 1, 2, 2]

        def loss():
            prototypes = compute_prototypes(support, net)
            grown = replace_classifier(classifier, prototypes, [2])
            logits = calibrated_scores(grown, embed(net, query), calibration)
            return F.cross_entropy(logits, grown.columns_for(labels))

        params = (
            list(net.parameters().values())
            + [classifier.weights]
            + list(calibration.parameters().values())
        )
        assert grad_check(loss, params) < 1e-4

    def test_raw_logit_loss(self):
        rng = np.random.default_rng(3)
        net = EmbeddingNet.initialize([4, 8], rng)
        classifier = Classifier.initialize(8, [0, 1, 2], rng)
        x = rng.standard_normal((5, 4))
        params = list(net.parameters().values()) + [classifier.weights]
        err = grad_check(lambda: F.cross_entropy(raw_logits(classifier, embed(net, x)), [0, 1, 2, 0, 1]), params)
        assert err < 1e-4
