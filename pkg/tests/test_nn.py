"""Dense network tests: forward, backprop vs finite differences, SGD, counts."""

import numpy as np
import pytest

from carelabel.nn import (
    DenseLayer,
    LabeledDataset,
    MlpModel,
    StaticModelStats,
    accuracy,
    count_flops,
    count_params,
    cross_entropy,
    estimate_train_energy,
    forward,
    input_gradient,
    make_blobs,
    parameter_gradients,
    train_sgd,
)
from carelabel.nn import _init_model
from carelabel.rng import SplitRng


def hand_fixture_model() -> MlpModel:
    # 2 -> 3 (relu) -> 2; scores for [1, 1] computed by hand:
    # z1 = [3.5, 0, -1] -> relu [3.5, 0, 0]; scores = [3.5, -3.0]
    w1 = np.array([[1.0, 0.0, -1.0], [2.0, 1.0, 0.0]])
    b1 = np.array([0.5, -1.0, 0.0])
    w2 = np.array([[1.0, -1.0], [0.0, 2.0], [1.0, 1.0]])
    b2 = np.array([0.0, 0.5])
    return MlpModel((DenseLayer(w1, b1, "relu"), DenseLayer(w2, b2, "identity")))


class TestForward:
    def test_zero_weight_model_zero_scores(self):
        model = MlpModel((DenseLayer(np.zeros((3, 2)), np.zeros(2), "identity"),))
        np.testing.assert_array_equal(forward(model, np.ones(3)), np.zeros(2))

    def test_identity_single_layer(self):
        model = MlpModel((DenseLayer(np.eye(4), np.zeros(4), "identity"),))
        v = np.array([0.3, -1.2, 5.0, 0.0])
        np.testing.assert_array_equal(forward(model, v), v)

    def test_hand_computed_fixture(self):
        scores = forward(hand_fixture_model(), np.array([1.0, 1.0]))
        np.testing.assert_allclose(scores, [3.5, -3.0], atol=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError, match="input dim"):
            forward(hand_fixture_model(), np.ones(5))

    def test_batch_matches_single(self):
        model = _init_model([3, 6, 2], seed=4, activation="relu")
        xs = np.array([[0.1, 0.2, 0.3], [1.0, -1.0, 0.5]])
        batch = forward(model, xs)
        for i in range(2):
            np.testing.assert_allclose(batch[i], forward(model, xs[i]))


class TestInputGradient:
    def test_matches_finite_differences_across_seeds(self):
        worst = 0.0
        for seed in range(20):
            rng = SplitRng(seed).split("fdcheck")
            model = _init_model([3, 5, 4, 2], seed, "relu")
            x = np.array([rng.uniform_signed() for _ in range(3)])
            grad = input_gradient(model, x, 1)
            h = 1e-5
            fd = np.zeros(3)
            for i in range(3):
                hi, lo = x.copy(), x.copy()
                hi[i] += h
                lo[i] -= h
                fd[i] = (
                    cross_entropy(model, hi, [1]) - cross_entropy(model, lo, [1])
                ) / (2 * h)
            rel = np.abs(grad - fd) / np.maximum(np.abs(fd), 1e-10)
            worst = max(worst, rel.max())
        assert worst < 1e-5

    def test_parameter_gradients_match_finite_differences(self):
        model = _init_model([2, 4, 3], seed=9, activation="relu")
        x = np.array([[0.5, -0.25], [1.5, 0.75]])
        y = np.array([0, 2])
        grads = parameter_gradients(model, x, y)
        h = 1e-5
        for li, lyr in enumerate(model.layers):
            gw = grads[li][0]
            for i in range(lyr.in_dim):
                for j in range(lyr.out_dim):
                    w_hi = lyr.weights.copy()
                    w_lo = lyr.weights.copy()
                    w_hi[i, j] += h
                    w_lo[i, j] -= h

                    def rebuilt(w):
                        layers = list(model.layers)
                        layers[li] = DenseLayer(w, lyr.biases, lyr.activation)
                        return MlpModel(tuple(layers))

                    fd = (
                        cross_entropy(rebuilt(w_hi), x, y)
                        - cross_entropy(rebuilt(w_lo), x, y)
                    ) / (2 * h)
                    assert gw[i, j] == pytest.approx(fd, rel=1e-4, abs=1e-8)

    def test_zero_weight_model_zero_gradient(self):
        model = MlpModel((DenseLayer(np.zeros((3, 2)), np.zeros(2), "identity"),))
        np.testing.assert_array_equal(
            input_gradient(model, np.ones(3), 0), np.zeros(3)
        )

    def test_single_linear_layer_gradient_direction_fixed(self):
        # For a linear 2-class model the input gradient is always a multiple
        # of the column difference of the weight matrix.
        w = np.array([[1.0, -2.0], [0.5, 3.0], [-1.0, 0.0]])
        model = MlpModel((DenseLayer(w, np.zeros(2), "identity"),))
        direction = w[:, 0] - w[:, 1]
        for x in (np.array([1.0, 0.0, 2.0]), np.array([-0.5, 1.5, 0.25])):
            g = input_gradient(model, x, 0)
            cos = g @ direction / (
                np.linalg.norm(g) * np.linalg.norm(direction)
            )
            assert abs(abs(cos) - 1.0) < 1e-12


class TestTraining:
    def test_separable_blobs_high_holdout_accuracy(self):
        ds = make_blobs(400, dims=2, classes=2, seed=11)
        result = train_sgd([2, 16, 2], ds, epochs=50, step=0.1, seed=11)
        assert result.holdout_accuracy >= 0.95

    def test_zero_learning_rate_no_update(self):
        ds = make_blobs(100, seed=11)
        result = train_sgd([2, 16, 2], ds, epochs=3, step=0.0, seed=11)
        init = _init_model([2, 16, 2], 11, "relu")
        for got, want in zip(result.model.layers, init.layers):
            assert np.array_equal(got.weights, want.weights)
            assert np.array_equal(got.biases, want.biases)

    def test_same_seed_bitwise_identical(self):
        ds = make_blobs(200, dims=3, classes=3, seed=5)
        a = train_sgd([3, 8, 3], ds, epochs=10, step=0.1, seed=5)
        b = train_sgd([3, 8, 3], ds, epochs=10, step=0.1, seed=5)
        for la, lb in zip(a.model.layers, b.model.layers):
            assert np.array_equal(la.weights, lb.weights)
            assert np.array_equal(la.biases, lb.biases)

    def test_model_json_round_trip(self):
        model = _init_model([2, 4, 2], seed=1, activation="relu")
        clone = MlpModel.from_json(model.to_json())
        for la, lb in zip(model.layers, clone.layers):
            assert np.array_equal(la.weights, lb.weights)
            assert la.activation == lb.activation


class TestStaticProperties:
    def test_single_layer_counts(self):
        model = MlpModel((DenseLayer(np.zeros((4, 3)), np.zeros(3)),))
        assert count_params(model) == 15
        assert count_flops(model) == 27

    def test_empty_model_counts(self):
        assert count_params(MlpModel(())) == 0
        assert count_flops(MlpModel(())) == 0

    def test_two_layer_counts_additive(self):
        model = MlpModel(
            (
                DenseLayer(np.zeros((4, 3)), np.zeros(3)),
                DenseLayer(np.zeros((3, 2)), np.zeros(2)),
            )
        )
        assert count_params(model) == 23
        assert count_flops(model) == 41

    def test_train_energy(self):
        assert estimate_train_energy(200, 360, 90) == pytest.approx(1.8)
        assert estimate_train_energy(1000, 3600, 1) == pytest.approx(1.0)
        assert estimate_train_energy(50, 10, 0) == 0.0
        with pytest.raises(ValueError):
            estimate_train_energy(-5, 10, 1)

    def test_stats_validation(self):
        with pytest.raises(ValueError):
            StaticModelStats("x", top1_acc=1.5, flops=1, params=1,
                             train_energy_kwh=1)


class TestDataset:
    def test_value_range_covers_inputs(self):
        ds = make_blobs(50, dims=3, classes=2, seed=2)
        lo, hi = ds.value_range
        assert np.all(ds.inputs >= lo) and np.all(ds.inputs <= hi)

    def test_accuracy_of_constant_model(self):
        ds = make_blobs(60, dims=2, classes=2, seed=3)
        model = MlpModel((DenseLayer(np.zeros((2, 2)), np.array([1.0, 0.0])),))
        # always predicts class 0; blobs are class-balanced
        assert accuracy(model, ds) == pytest.approx(0.5)
