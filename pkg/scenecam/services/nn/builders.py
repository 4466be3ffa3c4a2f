"""
The two classifiers compared in the experiment grid.

Both share a five-conv trunk (conv64-pool, conv192-pool, conv384, conv256,
conv256-pool). CNN-FC flattens into two 2048-wide fully connected blocks;
CNN-GAP averages each channel and maps the channel means to class scores
through one fully connected layer whose weights are the CAM weights.
"""

import logging

import numpy as np

from scenecam.errors import ParameterError, ShapeError
from scenecam.services.nn.network import NetworkState
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
    Shape,
    Softmax,
    shape_trace,
)

logger = logging.getLogger(__name__)

TRUNK_CHANNELS = (64, 192, 384, 256, 256)
POOL_AFTER = (0, 1, 4)  # conv positions followed by 3x3/2 max pooling
FC_DIM = 2048
DEFAULT_INPUT: Shape = (1, 100, 128)
ARCHS = ("fc", "gap")


def _scaled(n: int, width: float) -> int:
    return max(1, int(round(n * width)))


def trunk_specs(in_ch: int = 1, width: float = 1.0) -> list[LayerSpec]:
    specs: list[LayerSpec] = []
    ch = in_ch
    for i, out in enumerate(TRUNK_CHANNELS):
        out = _scaled(out, width)
        specs += [Conv(ch, out), BatchNorm(out), ReLU()]
        if i in POOL_AFTER:
            specs.append(MaxPool())
        ch = out
    return specs


def _check_input(input_shape: Shape, width: float) -> tuple[list[LayerSpec], Shape]:
    if len(input_shape) != 3:
        raise ShapeError(f"input shape must be (C, T, M), got {input_shape}")
    if width <= 0:
        raise ParameterError(f"width must be positive, got {width}")
    trunk = trunk_specs(input_shape[0], width)
    try:
        trunk_out = shape_trace(trunk, input_shape)[-1]
    except ShapeError as e:
        raise ShapeError(f"input {input_shape} is too small for three stride-2 poolings: {e}")
    return trunk, trunk_out


def cnn_fc_specs(
    n_classes: int = 15, input_shape: Shape = DEFAULT_INPUT, width: float = 1.0, fc_dim: int | None = None
) -> list[LayerSpec]:
    trunk, (c, h, w) = _check_input(input_shape, width)
    hidden = fc_dim if fc_dim is not None else _scaled(FC_DIM, width)
    return trunk + [
        Flatten(),
        Dropout(0.5),
        FullyConnected(c * h * w, hidden),
        BatchNorm(hidden),
        ReLU(),
        Dropout(0.5),
        FullyConnected(hidden, hidden),
        BatchNorm(hidden),
        ReLU(),
        FullyConnected(hidden, n_classes),
        Softmax(),
    ]


def cnn_gap_specs(n_classes: int = 15, input_shape: Shape = DEFAULT_INPUT, width: float = 1.0) -> list[LayerSpec]:
    trunk, (c, _, _) = _check_input(input_shape, width)
    return trunk + [GlobalAvgPool(), FullyConnected(c, n_classes), Softmax()]


def build_network(
    specs: list[LayerSpec],
    input_shape: Shape,
    seed: int = 0,
    arch: str = "custom",
    labels: list[str] | None = None,
    zero_head: bool = False,
) -> NetworkState:
    if labels and len(labels) != shape_trace(specs, input_shape)[-1][0]:
        raise ParameterError(f"{len(labels)} labels for a network with {shape_trace(specs, input_shape)[-1][0]} outputs")
    net = NetworkState(specs, input_shape, seed=seed, arch=arch, labels=labels)
    if zero_head:
        head = net.layers[net.logits_index]
        for name in head.param_names:
            head.params[name] = np.zeros_like(head.params[name])
    logger.debug(f"Built {arch} network: {len(specs)} layers, {net.n_parameters()} parameters, output {net.shapes[-1]}")
    return net


def build_cnn_fc(
    n_classes: int = 15,
    input_shape: Shape = DEFAULT_INPUT,
    seed: int = 0,
    width: float = 1.0,
    fc_dim: int | None = None,
    labels: list[str] | None = None,
    zero_head: bool = False,
) -> NetworkState:
    specs = cnn_fc_specs(n_classes, input_shape, width, fc_dim)
    return build_network(specs, input_shape, seed=seed, arch="fc", labels=labels, zero_head=zero_head)


def build_cnn_gap(
    n_classes: int = 15,
    input_shape: Shape = DEFAULT_INPUT,
    seed: int = 0,
    width: float = 1.0,
    labels: list[str] | None = None,
    zero_head: bool = False,
) -> NetworkState:
    specs = cnn_gap_specs(n_classes, input_shape, width)
    return build_network(specs, input_shape, seed=seed, arch="gap", labels=labels, zero_head=zero_head)


def build_arch(
    arch: str,
    n_classes: int,
    input_shape: Shape = DEFAULT_INPUT,
    seed: int = 0,
    width: float = 1.0,
    labels: list[str] | None = None,
    fc_dim: int | None = None,
) -> NetworkState:
    if arch == "fc":
        return build_cnn_fc(n_classes, input_shape, seed=seed, width=width, fc_dim=fc_dim, labels=labels)
    if arch == "gap":
        return build_cnn_gap(n_classes, input_shape, seed=seed, width=width, labels=labels)
    raise ParameterError(f"unknown architecture {arch!r} (expected one of {', '.join(ARCHS)})")
