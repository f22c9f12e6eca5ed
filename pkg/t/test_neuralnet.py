import json

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from dnnloc.errors import ConfigError, DivergenceError, ShapeError
from dnnloc.features import NormParams
from dnnloc.neuralnet import (Activation, MlpModel, TrainConfig, backward, forward, init_model,
                              localization_model, model_from_dict, model_to_dict, mse_loss,
                              predict_positions, train)


def _zero_model(sizes, activation):
    weights = [np.zeros((o, i)) for i, o in zip(sizes, sizes[1:])]
    biases = [np.zeros(o) for o in sizes[1:]]
    return MlpModel(tuple(sizes), weights, biases, activation)


def _numeric_gradients(model, x, y, h=1e-6):
    grads_w, grads_b = [], []
    for params, out in ((model.weights, grads_w), (model.biases, grads_b)):
        for p in params:
            g = np.zeros_like(p)
            for idx in np.ndindex(p.shape):
                keep = p[idx]
                p[idx] = keep + h
                up = mse_loss(forward(model, x), y)
                p[idx] = keep - h
                down = mse_loss(forward(model, x), y)
                p[idx] = keep
                g[idx] = (up - down) / (2 * h)
            out.append(g)
    return grads_w, grads_b


class TestActivation:
    def test_fixed_points(self):
        assert Activation.TANSIG(np.array(0.0)) == 0.0
        assert Activation.LOGSIG(np.array(0.0)) == 0.5
        assert Activation.RADBAS(np.array(0.0)) == 1.0
        assert Activation.POSLIN(np.array(-3.0)) == 0.0
        x = np.array([-2.0, 0.5, 7.0])
        assert_array_equal(Activation.PURELIN(x), x)

    def test_poslin_derivative_at_zero(self):
        assert Activation.POSLIN.derivative(np.array([0.0]))[0] == 0.0

    def test_parse(self):
        assert Activation.parse("LogSig") is Activation.LOGSIG
        assert Activation.parse("relu") is Activation.POSLIN
        with pytest.raises(ConfigError):
            Activation.parse("softmax")


class TestForward:
    def test_zero_weights(self):
        model = _zero_model((3, 4, 5, 2), Activation.TANSIG)
        out = forward(model, np.random.default_rng(0).normal(size=(7, 3)))
        assert_array_equal(out, np.zeros((7, 2)))

    def test_linear_collapse(self):
        model = init_model((3, 4, 5, 2), Activation.PURELIN, seed=1)
        x = np.random.default_rng(2).normal(size=(6, 3))
        w1, w2, w3 = model.weights
        b1, b2, b3 = model.biases
        expected = ((x @ w1.T + b1) @ w2.T + b2) @ w3.T + b3
        assert_allclose(forward(model, x), expected, rtol=1e-12)

    def test_logsig_bias_only(self):
        model = _zero_model((2, 3, 3, 2), Activation.LOGSIG)
        model.biases[2][:] = [1.0, 2.0]
        assert_allclose(forward(model, np.zeros((1, 2))), [[1.0, 2.0]])

    def test_width_mismatch(self):
        model = localization_model(9, 4, 4, Activation.TANSIG, seed=0)
        with pytest.raises(ShapeError):
            forward(model, np.zeros((2, 6)))

    def test_batch_stability(self):
        model = localization_model(5, 6, 7, Activation.RADBAS, seed=3)
        x = np.random.default_rng(4).uniform(size=(8, 5))
        rows = np.vstack([forward(model, x[i:i + 1]) for i in range(8)])
        assert_allclose(forward(model, x), rows, rtol=0, atol=1e-12)


class TestLoss:
    def test_values(self):
        assert mse_loss(np.ones((3, 2)), np.ones((3, 2))) == 0.0
        assert mse_loss(np.ones((3, 2)) + 1, np.ones((3, 2))) == 1.0
        assert mse_loss(np.array([[0.0, 0.0]]), np.array([[3.0, 4.0]])) == 12.5

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            mse_loss(np.zeros((3, 2)), np.zeros((2, 2)))


class TestBackward:
    @pytest.mark.parametrize("activation", list(Activation))
    def test_matches_finite_differences(self, activation):
        for seed in range(10):
            rng = np.random.default_rng(seed)
            sizes = (int(rng.integers(1, 6)), int(rng.integers(1, 8)), int(rng.integers(1, 8)), 2)
            model = init_model(sizes, activation, seed)
            x = rng.normal(size=(int(rng.integers(2, 9)), sizes[0]))
            y = rng.normal(size=(x.shape[0], 2))
            grads = backward(model, x, y)
            num_w, num_b = _numeric_gradients(model, x, y)
            for analytic, numeric in zip(grads.weights + grads.biases, num_w + num_b):
                assert_allclose(analytic, numeric, rtol=1e-5, atol=1e-8)

    def test_zero_residual(self):
        model = localization_model(3, 4, 4, Activation.TANSIG, seed=2)
        x = np.random.default_rng(0).uniform(size=(5, 3))
        grads = backward(model, x, forward(model, x))
        assert_allclose(grads.biases[-1], 0.0, atol=1e-15)

    def test_single_layer_closed_form(self):
        rng = np.random.default_rng(8)
        model = init_model((4, 2), Activation.PURELIN, seed=8)
        x = rng.normal(size=(10, 4))
        y = rng.normal(size=(10, 2))
        residual = forward(model, x) - y
        grads = backward(model, x, y)
        assert_allclose(grads.weights[0], (2.0 / y.size) * residual.T @ x, rtol=1e-12)


class TestTrain:
    def test_zero_learning_rate(self):
        model = localization_model(3, 4, 4, Activation.LOGSIG, seed=5)
        x = np.random.default_rng(1).uniform(size=(6, 3))
        y = np.random.default_rng(2).uniform(size=(6, 2))
        trained, history = train(model, x, y, TrainConfig(0.0, max_epochs=20, patience=100))
        assert len(set(history)) == 1
        for a, b in zip(trained.weights, model.weights):
            assert_array_equal(a, b)

    def test_linear_toy(self):
        x = np.linspace(-1, 1, 21).reshape(-1, 1)
        model = init_model((1, 1), Activation.PURELIN, seed=0)
        trained, history = train(model, x, 2 * x, TrainConfig(0.5, max_epochs=2000))
        assert trained.weights[0][0, 0] == pytest.approx(2.0, abs=1e-3)
        assert history[-1] < history[0]

    def test_deterministic_and_non_mutating(self):
        rng = np.random.default_rng(3)
        x = rng.uniform(size=(30, 6))
        y = rng.uniform(size=(30, 2))
        x_copy, y_copy = x.copy(), y.copy()
        cfg = TrainConfig(0.2, max_epochs=60, batch_size=8, seed=4)
        a, _ = train(localization_model(6, 5, 5, Activation.TANSIG, 4), x, y, cfg)
        b, _ = train(localization_model(6, 5, 5, Activation.TANSIG, 4), x, y, cfg)
        for wa, wb in zip(a.weights, b.weights):
            assert_array_equal(wa, wb)
        assert_array_equal(x, x_copy)
        assert_array_equal(y, y_copy)

    def test_loss_decreases(self):
        rng = np.random.default_rng(6)
        x = rng.uniform(size=(40, 3))
        y = np.column_stack([x[:, 0], x[:, 1] * x[:, 2]])
        _, history = train(localization_model(3, 8, 8, Activation.TANSIG, 6), x, y,
                           TrainConfig(0.5, max_epochs=300))
        assert min(history) < history[0]

    def test_divergence(self):
        rng = np.random.default_rng(0)
        x = rng.uniform(size=(20, 3)) * 100
        y = rng.uniform(size=(20, 2)) * 100
        model = localization_model(3, 10, 10, Activation.PURELIN, 0)
        with pytest.raises(DivergenceError) as info:
            train(model, x, y, TrainConfig(1e3, max_epochs=200))
        assert info.value.epoch >= 1
        assert "purelin" in str(info.value)

    def test_bad_config(self):
        with pytest.raises(ConfigError):
            TrainConfig(-0.1)
        with pytest.raises(ConfigError):
            TrainConfig(0.1, patience=0)


class TestSerialization:
    def test_round_trip(self):
        model = localization_model(9, 40, 50, Activation.LOGSIG, seed=12)
        back = model_from_dict(json.loads(json.dumps(model_to_dict(model))))
        assert back.layer_sizes == model.layer_sizes
        assert back.hidden_activation is Activation.LOGSIG
        for a, b in zip(back.weights, model.weights):
            assert_array_equal(a, b)

    def test_version_checked(self):
        data = model_to_dict(localization_model(3, 4, 4, Activation.TANSIG, 0))
        data["format_version"] = 99
        with pytest.raises(ConfigError):
            model_from_dict(data)

    def test_predict_positions_denormalizes(self):
        model = _zero_model((3, 4, 4, 2), Activation.TANSIG)
        model.biases[2][:] = [0.5, 0.5]
        norm = NormParams(np.array([20.0, -10.0]), np.array([40.0, 10.0]))
        assert_allclose(predict_positions(model, np.zeros((2, 3)), norm), [[30.0, 0.0], [30.0, 0.0]])
