from pathlib import Path

import numpy as np

from scenecam.services.dsp import Waveform, save_wav
from scenecam.services.nn.builders import build_cnn_gap
from scenecam.services.nn.network import NetworkState

TINY_INPUT = (1, 20, 24)
TINY_WIDTH = 0.05


def write_tone(
    path: Path, seconds: float, sample_rate: int = 8000, freq: float = 440.0, amplitude: float = 0.5
) -> Path:
    t = np.arange(int(round(seconds * sample_rate))) / sample_rate
    return save_wav(Waveform(amplitude * np.sin(2 * np.pi * freq * t), sample_rate), path)


def tiny_gap_net(seed: int = 0, n_classes: int = 4, input_shape: tuple[int, int, int] = TINY_INPUT) -> NetworkState:
    """CNN-GAP with the full trunk layout but a handful of channels."""
    return build_cnn_gap(n_classes, input_shape, seed=seed, width=TINY_WIDTH)


def rel_error(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(a) + np.linalg.norm(b), 1e-12))


def numerical_gradient(f, x: np.ndarray, step: float = 1e-5) -> np.ndarray:
    """Central differences of the scalar f() with respect to x, perturbed in place."""
    grad = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        old = x[idx]
        x[idx] = old + step
        plus = f()
        x[idx] = old - step
        minus = f()
        x[idx] = old
        grad[idx] = (plus - minus) / (2 * step)
    return grad
