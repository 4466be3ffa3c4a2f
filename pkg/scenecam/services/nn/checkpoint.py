"""
Model checkpoint container.

Layout (little-endian): magic b"SLNN", version u32, layer count u32, one tagged
record per layer spec, metadata length u32 + UTF-8 JSON, then every parameter
tensor in declaration order as float64 (BatchNorm running mean/var follow each
BatchNorm's gamma/beta).
"""

import io
import struct
from pathlib import Path
from typing import Any

import numpy as np

from scenecam.errors import FormatError, NotFoundError, UnsupportedError
from scenecam.schemas.training import CheckpointMeta
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
    Softmax,
)
from scenecam.utils.file_context import write_bytes_atomic

CHECKPOINT_MAGIC = b"SLNN"
CHECKPOINT_VERSION = 1
_F64 = np.dtype("<f8")

# tag -> (spec class, struct format of its fields)
_RECORDS: dict[int, tuple[type, str]] = {
    1: (Conv, "<IIIII"),
    2: (BatchNorm, "<I"),
    3: (ReLU, ""),
    4: (MaxPool, "<II"),
    5: (Flatten, ""),
    6: (Dropout, "<d"),
    7: (FullyConnected, "<II"),
    8: (GlobalAvgPool, ""),
    9: (Softmax, ""),
}
_TAGS = {cls: tag for tag, (cls, _) in _RECORDS.items()}


def _spec_fields(spec: LayerSpec) -> tuple[float | int, ...]:
    match spec:
        case Conv(in_ch=a, out_ch=b, k=k, pad=p, stride=s):
            return (a, b, k, p, s)
        case BatchNorm(ch=ch):
            return (ch,)
        case MaxPool(k=k, stride=s):
            return (k, s)
        case Dropout(p=p):
            return (p,)
        case FullyConnected(in_features=a, out_features=b):
            return (a, b)
    return ()


def meta_for(net: NetworkState, **overrides: object) -> CheckpointMeta:
    fields: dict[str, object] = {
        "arch": net.arch,
        "labels": net.labels,
        "input_shape": net.input_shape,
        "n_classes": net.n_classes,
    }
    fields.update(overrides)
    return CheckpointMeta.model_validate(fields)


def encode_checkpoint(net: NetworkState, meta: CheckpointMeta | None = None) -> bytes:
    meta = meta or meta_for(net)
    out = io.BytesIO()
    out.write(struct.pack("<4sII", CHECKPOINT_MAGIC, CHECKPOINT_VERSION, len(net.specs)))
    for spec in net.specs:
        tag = _TAGS[type(spec)]
        fmt = _RECORDS[tag][1]
        out.write(struct.pack("<B", tag))
        if fmt:
            out.write(struct.pack(fmt, *_spec_fields(spec)))
    meta_bytes = meta.model_dump_json().encode("utf-8")
    out.write(struct.pack("<I", len(meta_bytes)))
    out.write(meta_bytes)
    for layer in net.layers:
        for name in layer.param_names:
            out.write(layer.params[name].astype(_F64).tobytes(order="C"))
        for name in layer.buffer_names:
            out.write(layer.buffers[name].astype(_F64).tobytes(order="C"))
    return out.getvalue()


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.offset = 0

    def unpack(self, fmt: str) -> tuple[Any, ...]:
        size = struct.calcsize(fmt)
        if self.offset + size > len(self.data):
            raise FormatError("checkpoint is truncated")
        values = struct.unpack_from(fmt, self.data, self.offset)
        self.offset += size
        return values

    def array(self, shape: tuple[int, ...]) -> np.ndarray:
        count = int(np.prod(shape))
        size = count * _F64.itemsize
        if self.offset + size > len(self.data):
            raise FormatError("checkpoint is truncated")
        values = np.frombuffer(self.data, dtype=_F64, count=count, offset=self.offset).reshape(shape)
        self.offset += size
        return values.astype(np.float64)

    def raw(self, size: int) -> bytes:
        if self.offset + size > len(self.data):
            raise FormatError("checkpoint is truncated")
        chunk = self.data[self.offset : self.offset + size]
        self.offset += size
        return chunk


def decode_checkpoint(data: bytes) -> tuple[NetworkState, CheckpointMeta]:
    reader = _Reader(data)
    magic, version, count = reader.unpack("<4sII")
    if magic != CHECKPOINT_MAGIC:
        raise FormatError(f"bad checkpoint magic {magic!r}")
    if version != CHECKPOINT_VERSION:
        raise UnsupportedError(f"checkpoint version {version} is not supported")

    specs: list[LayerSpec] = []
    for _ in range(int(count)):
        (tag,) = reader.unpack("<B")
        if tag not in _RECORDS:
            raise FormatError(f"unknown layer record tag {tag}")
        cls, fmt = _RECORDS[int(tag)]
        specs.append(cls(*reader.unpack(fmt)) if fmt else cls())

    (meta_len,) = reader.unpack("<I")
    try:
        meta = CheckpointMeta.model_validate_json(reader.raw(int(meta_len)))
    except ValueError as e:
        raise FormatError(f"checkpoint metadata is invalid: {e}")

    net = NetworkState(specs, meta.input_shape, arch=meta.arch, labels=meta.labels)
    for layer in net.layers:
        for name in layer.param_names:
            layer.params[name] = reader.array(layer.params[name].shape)
        for name in layer.buffer_names:
            layer.buffers[name] = reader.array(layer.buffers[name].shape)
    if reader.offset != len(data):
        raise FormatError(f"{len(data) - reader.offset} trailing bytes after the last parameter tensor")
    return net.eval(), meta


def save_checkpoint(net: NetworkState, path: str | Path, meta: CheckpointMeta | None = None) -> Path:
    return write_bytes_atomic(path, encode_checkpoint(net, meta))


def load_checkpoint(path: str | Path) -> tuple[NetworkState, CheckpointMeta]:
    path = Path(path)
    if not path.exists():
        raise NotFoundError(f"checkpoint not found: {path}")
    return decode_checkpoint(path.read_bytes())
