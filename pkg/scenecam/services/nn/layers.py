"""
Layer implementations with analytic backward passes.

Activations are float64 arrays with the batch on axis 0 and channels on
axis 1. Each layer keeps what its backward pass needs only when forward is
called with keep=True; backward without it raises StateError.
"""

import math
from typing import Any

import numpy as np
from numpy.typing import NDArray

from scenecam.errors import ShapeError, StateError
from scenecam.services.nn.specs import (
    BatchNorm,
    Conv,
    Dropout,
    Flatten,
    FullyConnected,
    GlobalAvgPool,
    LayerSpec,
    MaxPool,
    ReLU,
    Softmax,
)

Array = NDArray[np.float64]

BN_EPS = 1e-5
BN_MOMENTUM = 0.1


class Layer:
    """Base layer: parameters, their gradients and a backward cache."""

    spec: LayerSpec
    param_names: tuple[str, ...] = ()
    buffer_names: tuple[str, ...] = ()

    def __init__(self, spec: LayerSpec):
        self.spec = spec
        self.params: dict[str, Array] = {}
        self.buffers: dict[str, Array] = {}
        self.grads: dict[str, Array] = {}
        self._cache: Any = None

    def forward(self, x: Array, train: bool, keep: bool, rng: np.random.Generator) -> Array:
        raise NotImplementedError

    def backward(self, dout: Array) -> Array:
        raise NotImplementedError

    def _cached(self) -> Any:
        if self._cache is None:
            raise StateError(f"{type(self.spec).__name__} layer has no retained forward pass")
        return self._cache

    def clear(self) -> None:
        self._cache = None
        self.grads = {}


def he_uniform(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int) -> Array:
    limit = math.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, size=shape)


class ConvLayer(Layer):
    param_names = ("W", "b")

    def __init__(self, spec: Conv, rng: np.random.Generator):
        super().__init__(spec)
        self.params["W"] = he_uniform(rng, (spec.out_ch, spec.in_ch, spec.k, spec.k), spec.in_ch * spec.k * spec.k)
        self.params["b"] = np.zeros(spec.out_ch)

    def _geometry(self, shape: tuple[int, ...]) -> tuple[int, int]:
        spec: Conv = self.spec  # type: ignore[assignment]
        h, w = shape[2], shape[3]
        return (h + 2 * spec.pad - spec.k) // spec.stride + 1, (w + 2 * spec.pad - spec.k) // spec.stride + 1

    def forward(self, x: Array, train: bool, keep: bool, rng: np.random.Generator) -> Array:
        spec: Conv = self.spec  # type: ignore[assignment]
        if x.ndim != 4 or x.shape[1] != spec.in_ch:
            raise ShapeError(f"conv expects (N, {spec.in_ch}, H, W), got {x.shape}")
        p, s, k = spec.pad, spec.stride, spec.k
        ho, wo = self._geometry(x.shape)
        xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))
        w = self.params["W"]

        # Sum of k*k shifted channel contractions; no im2col buffer
        out = np.zeros((x.shape[0], spec.out_ch, ho, wo))
        for i in range(k):
            for j in range(k):
                patch = xp[:, :, i : i + s * ho : s, j : j + s * wo : s]
                out += np.tensordot(patch, w[:, :, i, j], axes=([1], [1])).transpose(0, 3, 1, 2)
        out += self.params["b"][np.newaxis, :, np.newaxis, np.newaxis]
        self._cache = (x.shape, xp) if keep else None
        return out

    def backward(self, dout: Array) -> Array:
        spec: Conv = self.spec  # type: ignore[assignment]
        x_shape, xp = self._cached()
        p, s, k = spec.pad, spec.stride, spec.k
        ho, wo = dout.shape[2], dout.shape[3]
        w = self.params["W"]

        dw = np.zeros_like(w)
        dxp = np.zeros_like(xp)
        for i in range(k):
            for j in range(k):
                patch = xp[:, :, i : i + s * ho : s, j : j + s * wo : s]
                dw[:, :, i, j] = np.tensordot(dout, patch, axes=([0, 2, 3], [0, 2, 3]))
                dxp[:, :, i : i + s * ho : s, j : j + s * wo : s] += np.tensordot(
                    dout, w[:, :, i, j], axes=([1], [0])
                ).transpose(0, 3, 1, 2)
        self.grads = {"W": dw, "b": dout.sum(axis=(0, 2, 3))}
        return dxp[:, :, p : p + x_shape[2], p : p + x_shape[3]]


class BatchNormLayer(Layer):
    """Normalizes over every axis except channels (axis 1)."""

    param_names = ("gamma", "beta")
    buffer_names = ("running_mean", "running_var")

    def __init__(self, spec: BatchNorm):
        super().__init__(spec)
        self.params["gamma"] = np.ones(spec.ch)
        self.params["beta"] = np.zeros(spec.ch)
        self.buffers["running_mean"] = np.zeros(spec.ch)
        self.buffers["running_var"] = np.ones(spec.ch)

    @staticmethod
    def _axes(x: Array) -> tuple[int, ...]:
        return (0,) + tuple(range(2, x.ndim))

    def _broadcast(self, v: Array, ndim: int) -> Array:
        return v.reshape((1, -1) + (1,) * (ndim - 2))

    def forward(self, x: Array, train: bool, keep: bool, rng: np.random.Generator) -> Array:
        spec: BatchNorm = self.spec  # type: ignore[assignment]
        if x.ndim < 2 or x.shape[1] != spec.ch:
            raise ShapeError(f"batch norm expects {spec.ch} channels on axis 1, got {x.shape}")
        axes = self._axes(x)
        if train:
            mean = x.mean(axis=axes)
            var = x.var(axis=axes)
            n = x.size // spec.ch
            self.buffers["running_mean"] = (1 - BN_MOMENTUM) * self.buffers["running_mean"] + BN_MOMENTUM * mean
            unbiased = var * n / max(n - 1, 1)
            self.buffers["running_var"] = (1 - BN_MOMENTUM) * self.buffers["running_var"] + BN_MOMENTUM * unbiased
        else:
            mean = self.buffers["running_mean"]
            var = self.buffers["running_var"]
        inv_std = 1.0 / np.sqrt(var + BN_EPS)
        xhat = (x - self._broadcast(mean, x.ndim)) * self._broadcast(inv_std, x.ndim)
        out = xhat * self._broadcast(self.params["gamma"], x.ndim) + self._broadcast(self.params["beta"], x.ndim)
        self._cache = (xhat, inv_std, train) if keep else None
        return out

    def backward(self, dout: Array) -> Array:
        xhat, inv_std, train = self._cached()
        axes = self._axes(dout)
        nd = dout.ndim
        self.grads = {"gamma": (dout * xhat).sum(axis=axes), "beta": dout.sum(axis=axes)}
        dxhat = dout * self._broadcast(self.params["gamma"], nd)
        if not train:
            return dxhat * self._broadcast(inv_std, nd)
        n = dout.size // dout.shape[1]
        sum_dxhat = self._broadcast(dxhat.sum(axis=axes), nd)
        sum_dxhat_xhat = self._broadcast((dxhat * xhat).sum(axis=axes), nd)
        return self._broadcast(inv_std, nd) / n * (n * dxhat - sum_dxhat - xhat * sum_dxhat_xhat)


class ReLULayer(Layer):
    def forward(self, x: Array, train: bool, keep: bool, rng: np.random.Generator) -> Array:
        self._cache = (x > 0) if keep else None
        return np.maximum(x, 0.0)

    def backward(self, dout: Array) -> Array:
        return dout * self._cached()


class MaxPoolLayer(Layer):
    """k x k max pooling without padding; ties resolve to the first window position."""

    def forward(self, x: Array, train: bool, keep: bool, rng: np.random.Generator) -> Array:
        spec: MaxPool = self.spec  # type: ignore[assignment]
        k, s = spec.k, spec.stride
        if x.ndim != 4 or x.shape[2] < k or x.shape[3] < k:
            raise ShapeError(f"input {x.shape} is too small for {k}x{k} max pooling")
        ho, wo = (x.shape[2] - k) // s + 1, (x.shape[3] - k) // s + 1
        out = x[:, :, 0 : s * ho : s, 0 : s * wo : s].copy()
        arg = np.zeros(out.shape, dtype=np.int16)
        for i in range(k):
            for j in range(k):
                if i == 0 and j == 0:
                    continue
                candidate = x[:, :, i : i + s * ho : s, j : j + s * wo : s]
                better = candidate > out
                out[better] = candidate[better]
                arg[better] = i * k + j
        self._cache = (x.shape, arg) if keep else None
        return out

    def backward(self, dout: Array) -> Array:
        spec: MaxPool = self.spec  # type: ignore[assignment]
        x_shape, arg = self._cached()
        k, s = spec.k, spec.stride
        ho, wo = dout.shape[2], dout.shape[3]
        dx = np.zeros(x_shape)
        for i in range(k):
            for j in range(k):
                dx[:, :, i : i + s * ho : s, j : j + s * wo : s] += np.where(arg == i * k + j, dout, 0.0)
        return dx


class FlattenLayer(Layer):
    def forward(self, x: Array, train: bool, keep: bool, rng: np.random.Generator) -> Array:
        self._cache = x.shape if keep else None
        return x.reshape(x.shape[0], -1)

    def backward(self, dout: Array) -> Array:
        return dout.reshape(self._cached())


class DropoutLayer(Layer):
    """Inverted dropout: scaled at train time, identity at eval time."""

    def forward(self, x: Array, train: bool, keep: bool, rng: np.random.Generator) -> Array:
        p = self.spec.p  # type: ignore[union-attr]
        if not train or p == 0:
            self._cache = np.ones((1,) * x.ndim) if keep else None
            return x
        mask = (rng.random(x.shape) >= p) / (1.0 - p)
        self._cache = mask if keep else None
        return x * mask

    def backward(self, dout: Array) -> Array:
        return dout * self._cached()


class FullyConnectedLayer(Layer):
    """out = x @ W + b with W of shape (in, out); W[k, c] is the weight of input k for output c."""

    param_names = ("W", "b")

    def __init__(self, spec: FullyConnected, rng: np.random.Generator):
        super().__init__(spec)
        self.params["W"] = he_uniform(rng, (spec.in_features, spec.out_features), spec.in_features)
        self.params["b"] = np.zeros(spec.out_features)

    def forward(self, x: Array, train: bool, keep: bool, rng: np.random.Generator) -> Array:
        spec: FullyConnected = self.spec  # type: ignore[assignment]
        if x.ndim != 2 or x.shape[1] != spec.in_features:
            raise ShapeError(f"fully connected layer expects (N, {spec.in_features}), got {x.shape}")
        self._cache = x if keep else None
        return x @ self.params["W"] + self.params["b"]

    def backward(self, dout: Array) -> Array:
        x = self._cached()
        self.grads = {"W": x.T @ dout, "b": dout.sum(axis=0)}
        return dout @ self.params["W"].T


class GlobalAvgPoolLayer(Layer):
    """Spatial mean per channel (divides by the pixel count Z)."""

    def forward(self, x: Array, train: bool, keep: bool, rng: np.random.Generator) -> Array:
        if x.ndim != 4:
            raise ShapeError(f"global average pooling expects (N, C, H, W), got {x.shape}")
        self._cache = x.shape if keep else None
        return x.mean(axis=(2, 3))

    def backward(self, dout: Array) -> Array:
        n, c, h, w = self._cached()
        return np.broadcast_to(dout[:, :, np.newaxis, np.newaxis] / (h * w), (n, c, h, w)).copy()


def softmax(z: Array) -> Array:
    shifted = z - z.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


class SoftmaxLayer(Layer):
    def forward(self, x: Array, train: bool, keep: bool, rng: np.random.Generator) -> Array:
        p = softmax(x)
        self._cache = p if keep else None
        return p

    def backward(self, dout: Array) -> Array:
        p = self._cached()
        return p * (dout - (dout * p).sum(axis=-1, keepdims=True))


def make_layer(spec: LayerSpec, rng: np.random.Generator) -> Layer:
    match spec:
        case Conv():
            return ConvLayer(spec, rng)
        case BatchNorm():
            return BatchNormLayer(spec)
        case ReLU():
            return ReLULayer(spec)
        case MaxPool():
            return MaxPoolLayer(spec)
        case Flatten():
            return FlattenLayer(spec)
        case Dropout():
            return DropoutLayer(spec)
        case FullyConnected():
            return FullyConnectedLayer(spec, rng)
        case GlobalAvgPool():
            return GlobalAvgPoolLayer(spec)
        case Softmax():
            return SoftmaxLayer(spec)
    raise ShapeError(f"unknown layer spec {spec!r}")
