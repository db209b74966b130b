import numpy as np
import pytest

from forgekit.errors import ConfigError, DomainError
from forgekit.losses import (LossWeights, classification_loss,
                             classification_loss_grad, consistency_loss,
                             consistency_loss_grad, focal_heatmap_loss,
                             focal_heatmap_loss_grad, total_loss)

from conftest import finite_diff_grad, max_rel_error


def focal_loop_oracle(pred, target, gamma):
    total = 0.0
    for i in range(pred.shape[0]):
        for j in range(pred.shape[1]):
            h = pred[i, j] if target[i, j] == 1.0 else 1.0 - pred[i, j]
            total += -((1.0 - h) ** gamma) * np.log(h)
    return total


def bce_loop_oracle(pred, target):
    total = 0.0
    for i in range(pred.shape[0]):
        for j in range(pred.shape[1]):
            total += -(target[i, j] * np.log(pred[i, j])
                       + (1.0 - target[i, j]) * np.log(1.0 - pred[i, j]))
    return total / pred.size


def random_instance(rng, shape=(8, 8)):
    pred = rng.uniform(0.01, 0.99, size=shape)
    target = np.round(rng.random(shape) * 3) / 3  # includes exact 0 and 1
    peaks = rng.random(shape) < 0.05
    target[peaks] = 1.0
    return pred, target


class TestFocalHeatmapLoss:
    def test_perfect_prediction_limit(self):
        target = np.zeros((4, 4))
        target[1, 2] = 1.0
        for eps in (1e-4, 1e-6):
            pred = np.where(target == 1.0, 1.0 - eps, eps)
            assert focal_heatmap_loss(pred, target, 2.0) < 4 * 16 * eps

    def test_single_pixel_reference_value(self):
        # −(0.5)^2 ln(0.5)
        val = focal_heatmap_loss(np.array([[0.5]]), np.array([[1.0]]), 2.0)
        assert val == pytest.approx(0.25 * np.log(2.0), abs=1e-12)
        assert val == pytest.approx(0.173286, abs=1e-6)

    def test_matches_loop_oracle(self, rng):
        for _ in range(100):
            pred, target = random_instance(rng)
            got = focal_heatmap_loss(pred, target, 2.0)
            assert got == pytest.approx(focal_loop_oracle(pred, target, 2.0), abs=1e-12)

    def test_out_of_domain_rejected(self):
        with pytest.raises(DomainError):
            focal_heatmap_loss(np.array([[1.0]]), np.array([[1.0]]), 2.0)
        with pytest.raises(DomainError):
            focal_heatmap_loss(np.array([[0.0]]), np.array([[0.0]]), 2.0)

    def test_monotone_in_prediction(self, rng):
        # decreasing at positives, increasing at negatives
        target_pos = np.array([[1.0]])
        target_neg = np.array([[0.0]])
        vals = np.linspace(0.05, 0.95, 12)
        pos_losses = [focal_heatmap_loss(np.array([[v]]), target_pos, 2.0) for v in vals]
        neg_losses = [focal_heatmap_loss(np.array([[v]]), target_neg, 2.0) for v in vals]
        assert np.all(np.diff(pos_losses) < 0)
        assert np.all(np.diff(neg_losses) > 0)

    def test_gradient_matches_fd(self, rng):
        pred, target = random_instance(rng, (5, 5))
        analytic = focal_heatmap_loss_grad(pred, target, 2.0)
        fd = finite_diff_grad(lambda p: focal_heatmap_loss(p, target, 2.0), pred)
        assert max_rel_error(analytic, fd) < 1e-4


class TestConsistencyLoss:
    def test_exact_binary_match_is_near_zero(self):
        target = np.round(np.linspace(0, 1, 16)).reshape(4, 4)
        pred = np.clip(target, 1e-7, 1 - 1e-7)
        assert consistency_loss(pred, target) <= -np.log(1 - 1e-7) + 1e-15

    def test_single_pixel_ln2(self):
        assert consistency_loss(np.array([[0.5]]), np.array([[1.0]])) == \
            pytest.approx(np.log(2.0), abs=1e-12)

    def test_matches_loop_oracle(self, rng):
        for _ in range(100):
            pred = rng.uniform(0.01, 0.99, size=(8, 8))
            target = rng.random((8, 8))
            got = consistency_loss(pred, target)
            assert got == pytest.approx(bce_loop_oracle(pred, target), abs=1e-12)

    def test_gradient_matches_fd(self, rng):
        pred = rng.uniform(0.1, 0.9, size=(4, 4))
        target = rng.random((4, 4))
        analytic = consistency_loss_grad(pred, target)
        fd = finite_diff_grad(lambda p: consistency_loss(p, target), pred)
        assert max_rel_error(analytic, fd) < 1e-4


class TestClassificationLoss:
    def test_zero_logit_label_one(self):
        assert classification_loss(0.0, 1, 0.0) == pytest.approx(np.log(2.0), abs=1e-15)

    def test_smoothed_target_binary_entropy(self):
        # label 1 smoothed to 0.9; prediction 0.9 gives H(0.9)
        logit = np.log(0.9 / 0.1)
        expected = -(0.9 * np.log(0.9) + 0.1 * np.log(0.1))
        assert classification_loss(logit, 1, 0.1) == pytest.approx(expected, abs=1e-12)
        assert classification_loss(logit, 1, 0.1) == pytest.approx(0.325083, abs=1e-6)

    def test_large_logit_no_overflow(self):
        assert classification_loss(40.0, 1, 0.0) < 1e-12
        assert classification_loss(-40.0, 0, 0.0) < 1e-12
        assert np.isfinite(classification_loss(800.0, 0, 0.0))

    def test_gradient_matches_fd(self):
        for logit in (-3.0, -0.2, 0.0, 1.7):
            for label in (0, 1):
                fd = finite_diff_grad(
                    lambda z: classification_loss(float(z[0]), label, 0.1),
                    np.array([logit]))[0]
                assert abs(classification_loss_grad(logit, label, 0.1) - fd) < 1e-8

    def test_bad_label_rejected(self):
        with pytest.raises(DomainError):
            classification_loss(0.0, 2, 0.0)


class TestTotalLoss:
    def test_zero_weights_reduce_to_bce(self):
        w = LossWeights(lambda1=0.0, lambda2=0.0)
        assert total_loss(0.42, 5.0, 7.0, w) == 0.42

    def test_reference_arithmetic(self):
        w = LossWeights(lambda1=10.0, lambda2=100.0)
        assert total_loss(1.0, 2.0, 3.0, w) == 321.0

    def test_linear_in_parts(self, rng):
        w = LossWeights(lambda1=10.0, lambda2=100.0)
        for _ in range(20):
            b, h, c = rng.random(3)
            assert total_loss(b, h, c, w) == pytest.approx(
                b + 10.0 * h + 100.0 * c, rel=1e-15)

    def test_invalid_weights_rejected(self):
        with pytest.raises(ConfigError):
            LossWeights(lambda1=-1.0)
        with pytest.raises(ConfigError):
            LossWeights(smoothing_eps=0.5)

    def test_real_sample_losses_finite(self, rng):
        target_h = np.zeros((6, 6))
        target_c = np.ones((6, 6))
        for _ in range(10):
            pred = rng.uniform(1e-6, 1 - 1e-6, size=(6, 6))
            assert np.isfinite(focal_heatmap_loss(pred, target_h, 2.0))
            assert np.isfinite(consistency_loss(pred, target_c))
