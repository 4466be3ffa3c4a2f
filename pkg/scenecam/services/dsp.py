"""
Audio front end: WAV I/O, 1-second segmentation, STFT power spectra, mel
filterbank, log-Mel images and training-split normalization.

Every function here is a pure function of its inputs.
"""

import io
import logging
from collections.abc import Sequence
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np
from numpy.typing import NDArray
from scipy.io import wavfile
from scipy.signal import get_window

from scenecam.config import settings
from scenecam.errors import (
    EmptyInputError,
    FormatError,
    NotFoundError,
    ParameterError,
    ShapeError,
    TooShortError,
    UnsupportedError,
)
from scenecam.schemas.features import StftConfig
from scenecam.utils.file_context import write_bytes_atomic

logger = logging.getLogger(__name__)

PCM16_SCALE = 32768.0


@dataclass(frozen=True)
class Waveform:
    """Mono audio, amplitudes in [-1, 1]."""

    samples: NDArray[np.float64]
    sample_rate: int

    def __post_init__(self) -> None:
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise ShapeError(f"waveform must be mono (1-D), got shape {samples.shape}")
        if samples.size < 1:
            raise EmptyInputError("waveform has no samples")
        if not np.all(np.isfinite(samples)):
            raise FormatError("waveform contains non-finite samples")
        if self.sample_rate <= 0:
            raise ParameterError(f"sample rate must be positive, got {self.sample_rate}")
        object.__setattr__(self, "samples", samples)

    def __len__(self) -> int:
        return int(self.samples.size)

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate


@dataclass(frozen=True)
class LogMelImage:
    """T x M log-Mel image: rows are time frames, columns are mel bins."""

    values: NDArray[np.float64]

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise ShapeError(f"log-Mel image must be 2-D, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ShapeError("log-Mel image contains non-finite values")
        object.__setattr__(self, "values", values)

    @property
    def T(self) -> int:  # noqa: N802
        return int(self.values.shape[0])

    @property
    def M(self) -> int:  # noqa: N802
        return int(self.values.shape[1])

    @property
    def shape(self) -> tuple[int, int]:
        return (self.T, self.M)


@dataclass(frozen=True)
class NormStats:
    """Per-mel-bin mean and standard deviation from the training split."""

    mean: NDArray[np.float64]
    std: NDArray[np.float64]

    def __post_init__(self) -> None:
        mean = np.asarray(self.mean, dtype=np.float64)
        std = np.asarray(self.std, dtype=np.float64)
        if mean.ndim != 1 or mean.shape != std.shape:
            raise ShapeError(f"mean/std must be equal-length vectors, got {mean.shape} and {std.shape}")
        if np.any(std <= 0):
            raise ParameterError("std entries must be positive")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "std", std)

    @property
    def M(self) -> int:  # noqa: N802
        return int(self.mean.size)


def load_wav(path: str | Path) -> Waveform:
    """Read a 16-bit PCM RIFF/WAVE file; stereo is averaged to mono."""
    path = Path(path)
    if not path.exists():
        raise NotFoundError(f"audio file not found: {path}")
    try:
        sample_rate, data = wavfile.read(path)
    except ValueError as e:
        message = str(e)
        if "Unknown wave file format" in message or "Unsupported" in message:
            raise UnsupportedError(f"{path}: {message}")
        raise FormatError(f"{path}: {message}")
    except EOFError as e:
        raise FormatError(f"{path}: truncated file ({e})")

    if data.dtype != np.int16:
        raise UnsupportedError(f"{path}: only 16-bit PCM is supported, got {data.dtype}")
    if data.ndim == 2:
        if data.shape[1] > 2:
            raise UnsupportedError(f"{path}: {data.shape[1]} channels (expected 1 or 2)")
        samples = data.astype(np.float64).mean(axis=1) / PCM16_SCALE
    else:
        samples = data.astype(np.float64) / PCM16_SCALE
    if samples.size == 0:
        raise FormatError(f"{path}: no audio frames")
    return Waveform(samples, int(sample_rate))


def encode_wav(w: Waveform) -> bytes:
    """16-bit PCM encoding of a waveform; amplitudes are clipped to the PCM range."""
    pcm = np.clip(np.round(w.samples * PCM16_SCALE), -32768, 32767).astype(np.int16)
    buffer = io.BytesIO()
    wavfile.write(buffer, w.sample_rate, pcm)
    return buffer.getvalue()


def save_wav(w: Waveform, path: str | Path) -> Path:
    return write_bytes_atomic(path, encode_wav(w))


def segment(w: Waveform, seg_s: float = settings.segment_s, hop_s: float = settings.segment_hop_s) -> list[Waveform]:
    """Cut into fixed-length overlapping segments; a trailing remainder is dropped."""
    if seg_s <= 0 or hop_s <= 0:
        raise ParameterError(f"segment and hop durations must be positive, got {seg_s}, {hop_s}")
    seg_len = int(round(seg_s * w.sample_rate))
    hop = int(round(hop_s * w.sample_rate))
    if len(w) < seg_len:
        raise TooShortError(f"waveform of {w.duration:.3f}s is shorter than one {seg_s}s segment")
    count = (len(w) - seg_len) // hop + 1
    return [Waveform(w.samples[i * hop : i * hop + seg_len], w.sample_rate) for i in range(count)]


def stft_power(seg: Waveform, cfg: StftConfig) -> NDArray[np.float64]:
    """
    Hann-windowed power spectrum, one row per frame.

    Segments shorter than window + (target_frames - 1) * hop samples are
    right-padded with zeros so a 1 s segment always gives target_frames rows.
    """
    win = cfg.window_samples(seg.sample_rate)
    hop = cfg.hop_samples(seg.sample_rate)
    if cfg.fft_len < win:
        raise ParameterError(f"fft_len {cfg.fft_len} is shorter than the {win}-sample window")
    if len(seg) < win:
        raise TooShortError(f"segment of {len(seg)} samples is shorter than the {win}-sample window")

    x = seg.samples
    padded = cfg.padded_length(seg.sample_rate)
    if padded is not None and x.size < padded:
        x = np.pad(x, (0, padded - x.size))

    frames = np.lib.stride_tricks.sliding_window_view(x, win)[::hop]
    window = get_window("hann", win, fftbins=True)
    spectrum = np.fft.rfft(frames * window, n=cfg.fft_len, axis=1)
    return spectrum.real**2 + spectrum.imag**2


def hz_to_mel(f: NDArray[np.float64] | float) -> NDArray[np.float64]:
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m: NDArray[np.float64] | float) -> NDArray[np.float64]:
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_center_frequencies(cfg: StftConfig, sample_rate: int) -> NDArray[np.float64]:
    mel_points = np.linspace(0.0, float(hz_to_mel(sample_rate / 2.0)), cfg.n_mels + 2)
    return mel_to_hz(mel_points[1:-1])


@lru_cache(maxsize=16)
def _filterbank(cfg: StftConfig, sample_rate: int) -> NDArray[np.float64]:
    mel_points = np.linspace(0.0, float(hz_to_mel(sample_rate / 2.0)), cfg.n_mels + 2)
    spacing = mel_points[1] - mel_points[0]
    bin_mels = hz_to_mel(np.arange(cfg.fft_len // 2 + 1) * sample_rate / cfg.fft_len)

    # Triangles are symmetric in the mel domain with apex on each inner mel point
    distance = np.abs(bin_mels[np.newaxis, :] - mel_points[1:-1, np.newaxis])
    weights = np.maximum(0.0, 1.0 - distance / spacing)

    empty = np.flatnonzero(weights.sum(axis=1) <= 0)
    if empty.size:
        raise ParameterError(
            f"{empty.size} mel filters cover no FFT bin (n_mels={cfg.n_mels}, fft_len={cfg.fft_len}, sr={sample_rate})"
        )
    weights.setflags(write=False)
    return weights


def mel_filterbank(cfg: StftConfig, sample_rate: int) -> NDArray[np.float64]:
    """M x (fft_len/2 + 1) triangular HTK-mel filterbank with unnormalized areas."""
    if sample_rate <= 0:
        raise ParameterError(f"sample rate must be positive, got {sample_rate}")
    return _filterbank(cfg, sample_rate).copy()


def log_mel(seg: Waveform, cfg: StftConfig) -> LogMelImage:
    power = stft_power(seg, cfg)
    fb = _filterbank(cfg, seg.sample_rate)
    return LogMelImage(np.log(power @ fb.T + cfg.log_floor))


def extract_segments(
    w: Waveform,
    cfg: StftConfig,
    seg_s: float = settings.segment_s,
    hop_s: float = settings.segment_hop_s,
) -> list[LogMelImage]:
    """Segment a recording and compute the log-Mel image of every segment."""
    return [log_mel(s, cfg) for s in segment(w, seg_s, hop_s)]


def fit_norm(features: Sequence[LogMelImage], std_floor: float = settings.std_floor) -> NormStats:
    """Per-bin mean and population std over every frame of every image."""
    if not features:
        raise EmptyInputError("cannot fit normalization statistics on an empty feature list")
    widths = {img.M for img in features}
    if len(widths) != 1:
        raise ShapeError(f"feature images disagree on mel bins: {sorted(widths)}")
    frames = np.concatenate([img.values for img in features], axis=0)
    return NormStats(frames.mean(axis=0), np.maximum(frames.std(axis=0), std_floor))


def apply_norm(img: LogMelImage, stats: NormStats) -> LogMelImage:
    if img.M != stats.M:
        raise ShapeError(f"image has {img.M} mel bins but statistics have {stats.M}")
    return LogMelImage((img.values - stats.mean) / stats.std)


def stitch_frames(blocks: Sequence[NDArray[np.float64]], hop_frames: int) -> NDArray[np.float64]:
    """
    Overlap-average equally shaped T x M blocks that start hop_frames apart.

    Ten 1 s segments at 0.5 s hop and 10 ms frames stitch into a 1000 x 128 image.
    """
    if not blocks:
        raise EmptyInputError("nothing to stitch")
    if hop_frames < 1:
        raise ParameterError(f"hop_frames must be positive, got {hop_frames}")
    shapes = {b.shape for b in blocks}
    if len(shapes) != 1:
        raise ShapeError(f"blocks differ in shape: {sorted(shapes)}")
    t, m = blocks[0].shape
    total = hop_frames * (len(blocks) - 1) + t
    acc = np.zeros((total, m))
    counts = np.zeros((total, 1))
    for i, block in enumerate(blocks):
        acc[i * hop_frames : i * hop_frames + t] += block
        counts[i * hop_frames : i * hop_frames + t] += 1
    return acc / np.maximum(counts, 1)


def segment_hop_frames(cfg: StftConfig, hop_s: float = settings.segment_hop_s) -> int:
    return int(round(hop_s * cfg.frames_per_second()))
