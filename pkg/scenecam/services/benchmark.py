"""
Preprocessing cost of the enhancement filters on identical random inputs.

Timings are wall-clock seconds for the whole image set, the median of
`repeats` runs, measured in the calling thread.
"""

import logging
import statistics
from collections.abc import Sequence

import numpy as np

from scenecam.config import settings
from scenecam.errors import ParameterError
from scenecam.schemas.features import EnhanceKind
from scenecam.services.dsp import LogMelImage
from scenecam.services.enhance import enhance
from scenecam.utils.context_managers import timed_operation

logger = logging.getLogger(__name__)

DEFAULT_SHAPE = (1000, 128)
DEFAULT_IMAGES = 100


def bench_label(kind: EnhanceKind, median_kernel: tuple[int, int] | None = None) -> str:
    if kind is EnhanceKind.MEDIAN and median_kernel is not None:
        return f"median({median_kernel[0]},{median_kernel[1]})"
    return kind.value


def bench_preprocess(
    shape: tuple[int, int] = DEFAULT_SHAPE,
    n_images: int = DEFAULT_IMAGES,
    kinds: Sequence[EnhanceKind | str] = (EnhanceKind.DOG, EnhanceKind.SOBEL, EnhanceKind.MEDIAN),
    median_kernels: Sequence[tuple[int, int]] = ((51, 7),),
    repeats: int = 3,
    seed: int = 0,
) -> dict[str, float]:
    """Seconds per kind; the median kind is timed once per kernel in median_kernels."""
    if n_images < 1:
        raise ParameterError(f"n_images must be at least 1, got {n_images}")
    if not kinds:
        raise ParameterError("no feature kinds to benchmark")
    if repeats < 1:
        raise ParameterError(f"repeats must be at least 1, got {repeats}")
    if len(shape) != 2 or min(shape) < 1:
        raise ParameterError(f"image shape must be two positive sizes, got {shape}")

    rng = np.random.default_rng(seed)
    images = [LogMelImage(rng.standard_normal(shape)) for _ in range(n_images)]

    jobs: list[tuple[str, EnhanceKind, tuple[int, int]]] = []
    for kind in (EnhanceKind.parse(k) for k in kinds):
        if kind is EnhanceKind.MEDIAN:
            if not median_kernels:
                raise ParameterError("median benchmark needs at least one kernel")
            jobs += [(bench_label(kind, k), kind, (int(k[0]), int(k[1]))) for k in median_kernels]
        else:
            jobs.append((bench_label(kind), kind, settings.median_kernel))

    timings: dict[str, float] = {}
    for label, kind, kernel in jobs:
        runs = []
        for _ in range(repeats):
            with timed_operation(f"bench {label}") as timing:
                for img in images:
                    enhance(img, kind, kernel)
            runs.append(timing.seconds)
        timings[label] = statistics.median(runs)
        logger.info(f"{label}: {timings[label]:.4f}s for {n_images} images of {shape[0]}x{shape[1]}")
    return timings


def format_bench(timings: dict[str, float], shape: tuple[int, int], n_images: int) -> list[str]:
    return [
        f"kind={label} images={n_images} shape={shape[0]}x{shape[1]} seconds={seconds:.6f}"
        for label, seconds in timings.items()
    ]
