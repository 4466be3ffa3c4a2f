"""Analytic backward passes against central finite differences."""

import numpy as np
import pytest

from scenecam.errors import StateError
from scenecam.services.nn.layers import make_layer, softmax
from scenecam.services.nn.specs import (
    BatchNorm,
    Conv,
    Dropout,
    Flatten,
    FullyConnected,
    GlobalAvgPool,
    MaxPool,
    ReLU,
    Softmax,
)

from .helpers import numerical_gradient, rel_error

TOLERANCE = 1e-4
TRIALS = 50


def check_layer(spec, x: np.ndarray, rng: np.random.Generator, train: bool = True, seed: int = 0) -> None:
    layer = make_layer(spec, np.random.default_rng(seed))
    out = layer.forward(x, train=train, keep=True, rng=np.random.default_rng(seed))
    upstream = rng.standard_normal(out.shape)
    dx = layer.backward(upstream)
    grads = {name: g.copy() for name, g in layer.grads.items()}

    def loss() -> float:
        return float(np.sum(layer.forward(x, train=train, keep=False, rng=np.random.default_rng(seed)) * upstream))

    assert rel_error(dx, numerical_gradient(loss, x)) < TOLERANCE
    for name in layer.param_names:
        assert rel_error(grads[name], numerical_gradient(loss, layer.params[name])) < TOLERANCE, name


def away_from_zero(x: np.ndarray, margin: float = 0.05) -> np.ndarray:
    return np.where(np.abs(x) < margin, np.sign(x + 1e-12) * margin, x)


class TestGradientOracle:
    def test_conv(self):
        rng = np.random.default_rng(0)
        for trial in range(TRIALS):
            x = rng.standard_normal((2, 2, 5, 6))
            check_layer(Conv(2, 3), x, rng, seed=trial)

    def test_conv_strided_unpadded(self):
        rng = np.random.default_rng(1)
        for trial in range(TRIALS):
            x = rng.standard_normal((2, 2, 7, 6))
            check_layer(Conv(2, 2, k=3, pad=0, stride=2), x, rng, seed=trial)

    def test_batchnorm_train_feature_maps(self):
        rng = np.random.default_rng(2)
        for trial in range(TRIALS):
            layer_x = rng.standard_normal((3, 2, 3, 4)) * 2.0 + 1.0
            check_layer(BatchNorm(2), layer_x, rng, train=True, seed=trial)

    def test_batchnorm_train_vectors(self):
        rng = np.random.default_rng(3)
        for trial in range(TRIALS):
            check_layer(BatchNorm(5), rng.standard_normal((4, 5)), rng, train=True, seed=trial)

    def test_batchnorm_eval(self):
        rng = np.random.default_rng(4)
        for trial in range(TRIALS):
            check_layer(BatchNorm(3), rng.standard_normal((2, 3, 2, 2)), rng, train=False, seed=trial)

    def test_relu(self):
        rng = np.random.default_rng(5)
        for trial in range(TRIALS):
            check_layer(ReLU(), away_from_zero(rng.standard_normal((2, 3, 4))), rng, seed=trial)

    def test_maxpool(self):
        rng = np.random.default_rng(6)
        for trial in range(TRIALS):
            # A permutation keeps every window free of near-ties
            x = rng.permutation(2 * 2 * 7 * 8).reshape(2, 2, 7, 8) * 0.1
            check_layer(MaxPool(), x.astype(np.float64), rng, seed=trial)

    def test_flatten(self):
        rng = np.random.default_rng(7)
        for trial in range(TRIALS):
            check_layer(Flatten(), rng.standard_normal((2, 3, 2, 2)), rng, seed=trial)

    def test_dropout(self):
        rng = np.random.default_rng(8)
        for trial in range(TRIALS):
            check_layer(Dropout(0.5), rng.standard_normal((3, 6)), rng, train=True, seed=trial)

    def test_fully_connected(self):
        rng = np.random.default_rng(9)
        for trial in range(TRIALS):
            check_layer(FullyConnected(4, 3), rng.standard_normal((5, 4)), rng, seed=trial)

    def test_global_average_pool(self):
        rng = np.random.default_rng(10)
        for trial in range(TRIALS):
            check_layer(GlobalAvgPool(), rng.standard_normal((2, 3, 4, 5)), rng, seed=trial)

    def test_softmax(self):
        rng = np.random.default_rng(11)
        for trial in range(TRIALS):
            check_layer(Softmax(), rng.standard_normal((3, 5)), rng, seed=trial)


def test_backward_without_retained_pass_raises():
    layer = make_layer(Conv(1, 1), np.random.default_rng(0))
    layer.forward(np.zeros((1, 1, 4, 4)), train=False, keep=False, rng=np.random.default_rng(0))
    with pytest.raises(StateError):
        layer.backward(np.zeros((1, 1, 4, 4)))


def test_maxpool_ties_route_gradient_to_first_position():
    layer = make_layer(MaxPool(), np.random.default_rng(0))
    layer.forward(np.ones((1, 1, 3, 3)), train=False, keep=True, rng=np.random.default_rng(0))
    dx = layer.backward(np.ones((1, 1, 1, 1)))
    expected = np.zeros((1, 1, 3, 3))
    expected[0, 0, 0, 0] = 1.0
    np.testing.assert_array_equal(dx, expected)


def test_dropout_is_identity_in_eval_mode(rng):
    layer = make_layer(Dropout(0.5), rng)
    x = rng.standard_normal((4, 8))
    np.testing.assert_array_equal(layer.forward(x, train=False, keep=False, rng=rng), x)


def test_global_average_pool_is_invariant_to_spatial_shuffling(rng):
    layer = make_layer(GlobalAvgPool(), rng)
    x = rng.standard_normal((1, 3, 4, 5))
    shuffled = x.reshape(1, 3, -1)[:, :, rng.permutation(20)].reshape(1, 3, 4, 5)
    np.testing.assert_allclose(
        layer.forward(x, train=False, keep=False, rng=rng),
        layer.forward(shuffled, train=False, keep=False, rng=rng),
        atol=1e-12,
    )


def test_global_average_pool_of_constant_maps(rng):
    layer = make_layer(GlobalAvgPool(), rng)
    x = np.broadcast_to(np.array([1.5, -2.0, 0.25])[None, :, None, None], (1, 3, 4, 4)).copy()
    np.testing.assert_allclose(layer.forward(x, train=False, keep=False, rng=rng), [[1.5, -2.0, 0.25]])


def test_softmax_output_is_a_distribution(rng):
    p = softmax(rng.standard_normal((10, 15)) * 3)
    assert np.all((p > 0) & (p < 1))
    np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-9)
