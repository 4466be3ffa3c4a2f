"""
Edge and texture enhancement of log-Mel images.

Images are T x M arrays (time x mel bin). Borders are handled by whole-sample
reflection without repeating the edge pixel (scipy.ndimage "mirror").
Enhancement runs on raw log-Mel images, before per-bin normalization.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray
from scipy import ndimage

from scenecam.config import settings
from scenecam.errors import ParameterError
from scenecam.schemas.features import EnhanceKind
from scenecam.services.dsp import LogMelImage
from scenecam.services.monitoring import observe_enhance

logger = logging.getLogger(__name__)

BORDER_MODE = "mirror"

# Sobel kernels in the image frame where x runs along time and y along frequency
SOBEL_X = np.array([[1.0, 0.0, -1.0], [2.0, 0.0, -2.0], [1.0, 0.0, -1.0]])
SOBEL_Y = np.array([[1.0, 2.0, 1.0], [0.0, 0.0, 0.0], [-1.0, -2.0, -1.0]])


@dataclass(frozen=True)
class GaussianKernel:
    sigma: float
    radius: int
    weights: NDArray[np.float64]

    @classmethod
    def build(cls, sigma: float) -> "GaussianKernel":
        """Sampled Gaussian truncated at ceil(3 sigma) and renormalized to unit sum."""
        if not sigma > 0:
            raise ParameterError(f"Gaussian sigma must be positive, got {sigma}")
        radius = int(math.ceil(3.0 * sigma))
        offsets = np.arange(-radius, radius + 1, dtype=np.float64)
        weights = np.exp(-0.5 * (offsets / sigma) ** 2)
        weights /= weights.sum()
        return cls(sigma, radius, weights)


def gaussian_blur(img: LogMelImage, sigma: float) -> LogMelImage:
    kernel = GaussianKernel.build(sigma)
    out = ndimage.correlate1d(img.values, kernel.weights, axis=0, mode=BORDER_MODE)
    out = ndimage.correlate1d(out, kernel.weights, axis=1, mode=BORDER_MODE)
    return LogMelImage(out)


def dog(img: LogMelImage, sigmas: tuple[float, float] = settings.dog_sigmas) -> LogMelImage:
    """Difference of Gaussians: narrow blur minus wide blur."""
    narrow, wide = sigmas
    return LogMelImage(gaussian_blur(img, narrow).values - gaussian_blur(img, wide).values)


def sobel_gradients(img: LogMelImage) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """G_x (along time) and G_y (along frequency), both returned as T x M arrays."""
    # kernels are laid out with time on the horizontal axis, i.e. on values.T
    a = img.values.T
    gx = ndimage.convolve(a, SOBEL_X, mode=BORDER_MODE)
    gy = ndimage.convolve(a, SOBEL_Y, mode=BORDER_MODE)
    return gx.T, gy.T


def sobel(img: LogMelImage) -> LogMelImage:
    gx, gy = sobel_gradients(img)
    return LogMelImage(np.hypot(gx, gy))


def _check_kernel(kt: int, kf: int) -> None:
    for name, k in (("time", kt), ("frequency", kf)):
        if int(k) != k or k < 1 or k % 2 == 0:
            raise ParameterError(f"median kernel {name} size must be a positive odd integer, got {k}")


def median_filter(img: LogMelImage, kt: int, kf: int) -> LogMelImage:
    """Exact median over a kt x kf window (odd sizes, so the median is a sample)."""
    _check_kernel(kt, kf)
    return LogMelImage(ndimage.median_filter(img.values, size=(int(kt), int(kf)), mode=BORDER_MODE))


def remove_drift(img: LogMelImage, kernel: tuple[int, int] = settings.median_kernel) -> LogMelImage:
    """Subtract the median-filtered background, keeping sharp structures."""
    kt, kf = kernel
    return LogMelImage(img.values - median_filter(img, kt, kf).values)


def enhance(
    img: LogMelImage,
    kind: EnhanceKind | str,
    median_kernel: tuple[int, int] = settings.median_kernel,
) -> LogMelImage:
    kind = EnhanceKind.parse(kind)
    with observe_enhance(kind.value):
        if kind is EnhanceKind.LOGMEL:
            return img
        if kind is EnhanceKind.DOG:
            return dog(img)
        if kind is EnhanceKind.SOBEL:
            return sobel(img)
        return remove_drift(img, median_kernel)
