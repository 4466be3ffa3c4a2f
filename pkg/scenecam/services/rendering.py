"""
Raster helpers: grayscale scaling, display orientation, side-by-side panels
and PNG output.

Images are displayed with time on the horizontal axis and frequency rising
upwards, so a T x M array becomes an M-row, T-column raster.
"""

import io
import logging
from collections.abc import Sequence
from pathlib import Path

import numpy as np
from numpy.typing import NDArray
from PIL import Image

from scenecam.errors import EmptyInputError, ShapeError
from scenecam.utils.file_context import write_bytes_atomic

logger = logging.getLogger(__name__)

PANEL_GAP = 4


def grayscale(values: NDArray[np.float64]) -> NDArray[np.uint8]:
    """Min-max scale to 0..255; a constant image maps to 0."""
    values = np.asarray(values, dtype=np.float64)
    lo, hi = float(values.min()), float(values.max())
    if hi <= lo:
        return np.zeros(values.shape, dtype=np.uint8)
    return np.round((values - lo) / (hi - lo) * 255.0).astype(np.uint8)


def to_display(array: NDArray) -> NDArray:
    """T x M (x channels) array to display orientation: rows are frequency, highest first."""
    return np.swapaxes(array, 0, 1)[::-1]


def encode_png(pixels: NDArray[np.uint8]) -> bytes:
    if pixels.dtype != np.uint8 or pixels.ndim not in (2, 3):
        raise ShapeError(f"PNG output needs a uint8 gray or RGB raster, got {pixels.dtype} {pixels.shape}")
    buffer = io.BytesIO()
    Image.fromarray(np.ascontiguousarray(pixels)).save(buffer, format="PNG")
    return buffer.getvalue()


def save_png(pixels: NDArray[np.uint8], path: str | Path) -> Path:
    path = write_bytes_atomic(path, encode_png(pixels))
    logger.info(f"Wrote {pixels.shape[1]}x{pixels.shape[0]} PNG to {path}")
    return path


def grayscale_raster(values: NDArray[np.float64]) -> NDArray[np.uint8]:
    """Display-oriented grayscale raster of a T x M image."""
    return to_display(grayscale(values))


def feature_panel(images: Sequence[NDArray[np.float64]], gap: int = PANEL_GAP) -> NDArray[np.uint8]:
    """Each image scaled independently and placed left to right with a white gap."""
    if not images:
        raise EmptyInputError("panel needs at least one image")
    rasters = [grayscale_raster(img) for img in images]
    height = max(r.shape[0] for r in rasters)
    width = sum(r.shape[1] for r in rasters) + gap * (len(rasters) - 1)
    panel = np.full((height, width), 255, dtype=np.uint8)
    x = 0
    for raster in rasters:
        panel[height - raster.shape[0] :, x : x + raster.shape[1]] = raster
        x += raster.shape[1] + gap
    return panel
