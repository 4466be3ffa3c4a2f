"""
NetworkState: an ordered stack of layers plus the activations retained by the
last forward pass (the feature maps that CAM and Grad-CAM read).
"""

import logging
from collections.abc import Iterable
from dataclasses import dataclass, field
from typing import Literal

import numpy as np
from numpy.typing import NDArray

from scenecam.errors import ShapeError, StateError
from scenecam.services.nn.layers import Array, Layer, make_layer, softmax
from scenecam.services.nn.specs import LayerSpec, Shape, Softmax, shape_trace

logger = logging.getLogger(__name__)


@dataclass
class Activations:
    """Retained forward pass: the input batch and every layer's output."""

    input: Array
    outputs: list[Array]


@dataclass
class Gradients:
    params: list[dict[str, Array]]
    activations: dict[int, Array] = field(default_factory=dict)
    input: Array | None = None


class NetworkState:
    def __init__(
        self,
        specs: list[LayerSpec],
        input_shape: Shape,
        seed: int = 0,
        arch: str = "custom",
        labels: list[str] | None = None,
    ):
        self.specs = list(specs)
        self.input_shape: Shape = tuple(int(d) for d in input_shape)
        self.shapes = shape_trace(self.specs, self.input_shape)
        init_rng = np.random.default_rng(seed)
        self.layers: list[Layer] = [make_layer(spec, init_rng) for spec in self.specs]
        self.rng = np.random.default_rng(seed)
        self.mode: Literal["train", "eval"] = "eval"
        self.cache: Activations | None = None
        self.arch = arch
        self.labels = list(labels) if labels else []
        self.debug = False

    # -- structure -----------------------------------------------------------

    @property
    def n_classes(self) -> int:
        return int(self.shapes[-1][0])

    @property
    def logits_index(self) -> int:
        """Index of the layer whose output is the pre-softmax score vector."""
        if isinstance(self.specs[-1], Softmax):
            return len(self.specs) - 2
        return len(self.specs) - 1

    def train(self) -> "NetworkState":
        self.mode = "train"
        return self

    def eval(self) -> "NetworkState":
        self.mode = "eval"
        return self

    def parameters(self) -> Iterable[tuple[int, str, Array]]:
        for i, layer in enumerate(self.layers):
            for name in layer.param_names:
                yield i, name, layer.params[name]

    def n_parameters(self) -> int:
        return sum(p.size for _, _, p in self.parameters())

    # -- passes --------------------------------------------------------------

    def _as_batch(self, x: NDArray[np.float64]) -> tuple[Array, bool]:
        x = np.asarray(x, dtype=np.float64)
        if x.shape == self.input_shape:
            return x[np.newaxis], True
        if x.ndim == len(self.input_shape) + 1 and x.shape[1:] == self.input_shape:
            return x, False
        raise ShapeError(f"network expects input {self.input_shape} (optionally batched), got {x.shape}")

    def run(self, x: NDArray[np.float64], retain: bool = False) -> Array:
        """Forward a batch and return the output of the last layer, batch axis kept."""
        batch, _ = self._as_batch(x)
        train = self.mode == "train"
        outputs: list[Array] = []
        h = batch
        for i, layer in enumerate(self.layers):
            h = layer.forward(h, train=train, keep=retain, rng=self.rng)
            if self.debug and not np.all(np.isfinite(h)):
                raise StateError(f"non-finite activation after layer {i} ({type(layer.spec).__name__})")
            if retain:
                outputs.append(h)
        self.cache = Activations(batch, outputs) if retain else None
        return h

    def forward(self, x: NDArray[np.float64], retain: bool = False) -> Array:
        """Class probabilities; a single unbatched input gives a 1-D vector."""
        _, single = self._as_batch(x)
        out = self.run(x, retain=retain)
        if not isinstance(self.specs[-1], Softmax):
            out = softmax(out)
        return out[0] if single else out

    def logits(self) -> Array:
        """Pre-softmax scores of the retained forward pass, shape (N, n_classes)."""
        return self.retained().outputs[self.logits_index]

    def retained(self) -> Activations:
        if self.cache is None:
            raise StateError("no retained forward pass; call forward(..., retain=True) first")
        return self.cache

    def activation(self, layer_index: int) -> Array:
        return self.retained().outputs[layer_index]

    def backward(
        self,
        grad: NDArray[np.float64],
        wrt_logits: bool = True,
        capture: Iterable[int] = (),
    ) -> Gradients:
        """
        Backpropagate an upstream gradient through the retained pass.

        With wrt_logits the gradient is taken at the pre-softmax scores and the
        softmax layer is skipped; otherwise it is the gradient at the network
        output. Gradients w.r.t. the outputs of layers listed in capture are
        returned alongside every parameter gradient.
        """
        cache = self.retained()
        start = self.logits_index if wrt_logits else len(self.layers) - 1
        g = np.asarray(grad, dtype=np.float64)
        expected = cache.outputs[start].shape
        if g.shape != expected:
            if g.shape == expected[1:] and expected[0] == 1:
                g = g[np.newaxis]
            else:
                raise ShapeError(f"upstream gradient has shape {g.shape}, expected {expected}")

        wanted = set(capture)
        captured: dict[int, Array] = {}
        for layer in self.layers[start + 1 :]:
            layer.grads = {}
        for i in range(start, -1, -1):
            if i in wanted:
                captured[i] = g
            g = self.layers[i].backward(g)

        params = [
            {name: layer.grads.get(name, np.zeros_like(layer.params[name])) for name in layer.param_names}
            for layer in self.layers
        ]
        return Gradients(params=params, activations=captured, input=g)

    def clear(self) -> None:
        self.cache = None
        for layer in self.layers:
            layer.clear()


def softmax_cross_entropy(logits: Array, labels: NDArray[np.int64]) -> tuple[float, Array]:
    """Mean cross-entropy and its gradient at the logits, (p - onehot) / N."""
    n = logits.shape[0]
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_p = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    loss = float(-log_p[np.arange(n), labels].mean())
    grad = np.exp(log_p)
    grad[np.arange(n), labels] -= 1.0
    return loss, grad / n
