"""
Class activation maps for a retained forward pass.

CAM weights the feature maps feeding global average pooling by the head
weights w^c_k; Grad-CAM weights any conv-trunk activation by the spatial mean
of the class logit's gradient. Both keep the sign of the map, and overlays
paint positive evidence red and negative evidence blue.
"""

import logging
from collections.abc import Sequence
from dataclasses import dataclass

import cv2
import numpy as np
from numpy.typing import NDArray

from scenecam.config import settings
from scenecam.errors import ParameterError, ShapeError, UnsupportedError
from scenecam.services.dsp import LogMelImage, stitch_frames
from scenecam.services.nn.network import NetworkState
from scenecam.services.nn.specs import FullyConnected, GlobalAvgPool, trunk_rows
from scenecam.services.rendering import grayscale, to_display

logger = logging.getLogger(__name__)

DEFAULT_CAM_ROW = 7  # second 256-channel conv, post-ReLU, before the last pooling


@dataclass(frozen=True)
class Cam:
    map: NDArray[np.float64]
    class_id: int
    layer_index: int
    channel_weights: NDArray[np.float64]
    pixel_count: int


@dataclass(frozen=True)
class OverlayImage:
    width: int
    height: int
    rgb: NDArray[np.uint8]  # height x width x 3, display orientation


@dataclass(frozen=True)
class ActivationReport:
    high_energy_mean: float
    other_mean: float
    ratio: float
    quantile: float

    def to_records(self) -> list[str]:
        return [
            f"activation.high_energy_mean={self.high_energy_mean!r}",
            f"activation.other_mean={self.other_mean!r}",
            f"activation.ratio={self.ratio!r}",
            f"activation.quantile={self.quantile!r}",
        ]


def _check_class(net: NetworkState, class_id: int) -> None:
    if not 0 <= class_id < net.n_classes:
        raise ParameterError(f"class {class_id} is outside [0, {net.n_classes})")


def gap_layer_index(net: NetworkState) -> int:
    """Index of the GlobalAvgPool layer of a GAP + linear head network."""
    for i, spec in enumerate(net.specs):
        if isinstance(spec, GlobalAvgPool):
            if i + 1 == net.logits_index and isinstance(net.specs[i + 1], FullyConnected):
                return i
            break
    raise UnsupportedError(f"CAM needs a global-average-pooling network with a linear head, got arch {net.arch!r}")


def _feature_maps(net: NetworkState, layer_index: int) -> NDArray[np.float64]:
    cache = net.retained()
    return cache.input if layer_index < 0 else cache.outputs[layer_index]


def cam_gap(net: NetworkState, class_id: int) -> Cam:
    """M_c(x, y) = sum_k w^c_k f_k(x, y) over the maps feeding global average pooling."""
    gap = gap_layer_index(net)
    _check_class(net, class_id)
    feature_index = gap - 1
    f = _feature_maps(net, feature_index)[0]
    weights = net.layers[gap + 1].params["W"][:, class_id].copy()
    cam_map = np.tensordot(weights, f, axes=([0], [0]))
    return Cam(cam_map, class_id, feature_index, weights, int(f.shape[1] * f.shape[2]))


def grad_cam(net: NetworkState, class_id: int, layer_index: int) -> Cam:
    """alpha^c_k = mean over pixels of d(logit_c)/d f_k; map = sum_k alpha^c_k f_k, no ReLU."""
    _check_class(net, class_id)
    cache = net.retained()
    if not 0 <= layer_index < net.logits_index or cache.outputs[layer_index].ndim != 4:
        raise ParameterError(f"layer {layer_index} is not a convolutional feature map of this network")
    seed = np.zeros_like(net.logits())
    seed[0, class_id] = 1.0
    grads = net.backward(seed, wrt_logits=True, capture=[layer_index])
    d_f = grads.activations[layer_index][0]
    f = cache.outputs[layer_index][0]
    alpha = d_f.mean(axis=(1, 2))
    cam_map = np.tensordot(alpha, f, axes=([0], [0]))
    return Cam(cam_map, class_id, layer_index, alpha, int(f.shape[1] * f.shape[2]))


def resolve_layer(net: NetworkState, row: int) -> int:
    """Network layer index holding the activation of a numbered trunk row (1-based)."""
    rows = trunk_rows(net.specs)
    if not 1 <= row <= len(rows):
        raise ParameterError(f"trunk row {row} does not exist (network has rows 1..{len(rows)})")
    return rows[row - 1]


def default_cam_layer(net: NetworkState) -> int:
    rows = trunk_rows(net.specs)
    return rows[min(DEFAULT_CAM_ROW, len(rows)) - 1]


def upsample(cam_map: NDArray[np.float64], shape: tuple[int, int]) -> NDArray[np.float64]:
    """Bilinear resize of a coarse map to (T, M)."""
    t, m = shape
    return cv2.resize(np.ascontiguousarray(cam_map, dtype=np.float64), (m, t), interpolation=cv2.INTER_LINEAR)


def render_map_overlay(
    values: NDArray[np.float64], activation: NDArray[np.float64], alpha: float = settings.overlay_alpha
) -> OverlayImage:
    """Blend a full-resolution signed activation map over a grayscale T x M image."""
    if not 0.0 <= alpha <= 1.0:
        raise ParameterError(f"overlay opacity must lie in [0, 1], got {alpha}")
    if activation.shape != values.shape:
        raise ShapeError(f"activation {activation.shape} does not match image {values.shape}")
    base = grayscale(values).astype(np.float64)

    pos = np.clip(activation, 0.0, None)
    neg = np.clip(-activation, 0.0, None)
    # Each sign is scaled by its own maximum so weak negative evidence stays visible
    a_pos = alpha * pos / pos.max() if pos.max() > 0 else np.zeros_like(pos)
    a_neg = alpha * neg / neg.max() if neg.max() > 0 else np.zeros_like(neg)

    keep = 1.0 - a_pos - a_neg
    rgb = np.stack([base * keep + 255.0 * a_pos, base * keep, base * keep + 255.0 * a_neg], axis=-1)
    rgb = to_display(np.clip(np.round(rgb), 0, 255).astype(np.uint8))
    return OverlayImage(width=rgb.shape[1], height=rgb.shape[0], rgb=rgb)


def render_overlay(img: LogMelImage, cam: Cam, alpha: float = settings.overlay_alpha) -> OverlayImage:
    return render_map_overlay(img.values, upsample(cam.map, img.shape), alpha)


def event_activation_report(
    img: LogMelImage, cam: Cam | NDArray[np.float64], energy_quantile: float = 0.95
) -> ActivationReport:
    """Mean |activation| on the loudest pixels versus everywhere else."""
    if not 0.0 <= energy_quantile < 1.0:
        raise ParameterError(f"energy quantile must lie in [0, 1), got {energy_quantile}")
    activation = cam.map if isinstance(cam, Cam) else np.asarray(cam, dtype=np.float64)
    if activation.shape != img.shape:
        activation = upsample(activation, img.shape)
    magnitude = np.abs(activation)
    high = img.values > np.quantile(img.values, energy_quantile)
    if not high.any() or high.all():
        logger.warning("Energy threshold does not split the image; activation ratio is undefined")
        return ActivationReport(float("nan"), float("nan"), float("nan"), energy_quantile)

    high_mean = float(magnitude[high].mean())
    other_mean = float(magnitude[~high].mean())
    if other_mean > 0:
        ratio = high_mean / other_mean
    else:
        ratio = 1.0 if high_mean == 0 else float("inf")
    return ActivationReport(high_mean, other_mean, ratio, energy_quantile)


def sample_cam(
    net: NetworkState,
    segments: Sequence[LogMelImage],
    class_id: int,
    layer_index: int,
    hop_frames: int,
) -> NDArray[np.float64]:
    """Grad-CAM of every segment at input resolution, overlap-averaged along time."""
    net.eval()
    maps = []
    for seg in segments:
        net.forward(seg.values[np.newaxis], retain=True)
        maps.append(upsample(grad_cam(net, class_id, layer_index).map, seg.shape))
    net.clear()
    return stitch_frames(maps, hop_frames)
