"""
Binary containers for log-Mel images and normalization statistics.

Feature file: magic b"SLNS", version u32, T u32, M u32, then T*M row-major
float64 values. Statistics file: M u32, mean[M], std[M]. All little-endian.
"""

import struct
from pathlib import Path

import numpy as np

from scenecam.errors import FormatError, NotFoundError, UnsupportedError
from scenecam.services.dsp import LogMelImage, NormStats
from scenecam.utils.file_context import write_bytes_atomic

FEATURE_MAGIC = b"SLNS"
FEATURE_VERSION = 1
_FEATURE_HEADER = struct.Struct("<4sIII")
_STATS_HEADER = struct.Struct("<I")
_F64 = np.dtype("<f8")


def encode_feature(img: LogMelImage) -> bytes:
    header = _FEATURE_HEADER.pack(FEATURE_MAGIC, FEATURE_VERSION, img.T, img.M)
    return header + img.values.astype(_F64).tobytes(order="C")


def decode_feature(data: bytes) -> LogMelImage:
    if len(data) < _FEATURE_HEADER.size:
        raise FormatError("feature container is shorter than its header")
    magic, version, t, m = _FEATURE_HEADER.unpack_from(data)
    if magic != FEATURE_MAGIC:
        raise FormatError(f"bad feature magic {magic!r}")
    if version != FEATURE_VERSION:
        raise UnsupportedError(f"feature container version {version} is not supported")
    expected = _FEATURE_HEADER.size + t * m * _F64.itemsize
    if len(data) != expected:
        raise FormatError(f"feature container holds {len(data)} bytes, expected {expected} for {t}x{m}")
    values = np.frombuffer(data, dtype=_F64, offset=_FEATURE_HEADER.size).reshape(t, m)
    return LogMelImage(values.astype(np.float64))


def encode_stats(stats: NormStats) -> bytes:
    return (
        _STATS_HEADER.pack(stats.M)
        + stats.mean.astype(_F64).tobytes()
        + stats.std.astype(_F64).tobytes()
    )


def decode_stats(data: bytes) -> NormStats:
    if len(data) < _STATS_HEADER.size:
        raise FormatError("statistics container is shorter than its header")
    (m,) = _STATS_HEADER.unpack_from(data)
    expected = _STATS_HEADER.size + 2 * m * _F64.itemsize
    if len(data) != expected:
        raise FormatError(f"statistics container holds {len(data)} bytes, expected {expected} for M={m}")
    values = np.frombuffer(data, dtype=_F64, offset=_STATS_HEADER.size)
    return NormStats(values[:m].copy(), values[m:].copy())


def _read(path: str | Path) -> bytes:
    path = Path(path)
    if not path.exists():
        raise NotFoundError(f"file not found: {path}")
    return path.read_bytes()


def save_feature(img: LogMelImage, path: str | Path) -> Path:
    return write_bytes_atomic(path, encode_feature(img))


def load_feature(path: str | Path) -> LogMelImage:
    return decode_feature(_read(path))


def save_stats(stats: NormStats, path: str | Path) -> Path:
    return write_bytes_atomic(path, encode_stats(stats))


def load_stats(path: str | Path) -> NormStats:
    return decode_stats(_read(path))
