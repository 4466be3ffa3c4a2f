"""
Declarative layer descriptions and the shape arithmetic that chains them.

Shapes exclude the batch axis: (C, H, W) for feature maps, (D,) for vectors.
"""

from dataclasses import dataclass

from scenecam.errors import ShapeError

Shape = tuple[int, ...]


@dataclass(frozen=True)
class Conv:
    in_ch: int
    out_ch: int
    k: int = 3
    pad: int = 1
    stride: int = 1


@dataclass(frozen=True)
class BatchNorm:
    ch: int


@dataclass(frozen=True)
class ReLU:
    pass


@dataclass(frozen=True)
class MaxPool:
    k: int = 3
    stride: int = 2


@dataclass(frozen=True)
class Flatten:
    pass


@dataclass(frozen=True)
class Dropout:
    p: float = 0.5


@dataclass(frozen=True)
class FullyConnected:
    in_features: int
    out_features: int


@dataclass(frozen=True)
class GlobalAvgPool:
    pass


@dataclass(frozen=True)
class Softmax:
    pass


LayerSpec = Conv | BatchNorm | ReLU | MaxPool | Flatten | Dropout | FullyConnected | GlobalAvgPool | Softmax

SPATIAL_SPECS = (Conv, BatchNorm, ReLU, MaxPool)


def _window_out(n: int, k: int, stride: int, pad: int = 0) -> int:
    return (n + 2 * pad - k) // stride + 1


def output_shape(spec: LayerSpec, shape: Shape) -> Shape:
    """Shape produced by one layer, or ShapeError when the input does not fit."""
    match spec:
        case Conv(in_ch=in_ch, out_ch=out_ch, k=k, pad=pad, stride=stride):
            if len(shape) != 3 or shape[0] != in_ch:
                raise ShapeError(f"conv expects ({in_ch}, H, W), got {shape}")
            h, w = _window_out(shape[1], k, stride, pad), _window_out(shape[2], k, stride, pad)
            if h < 1 or w < 1:
                raise ShapeError(f"input {shape} is too small for a {k}x{k} convolution")
            return (out_ch, h, w)
        case BatchNorm(ch=ch):
            if shape[0] != ch:
                raise ShapeError(f"batch norm over {ch} channels got input {shape}")
            return shape
        case MaxPool(k=k, stride=stride):
            if len(shape) != 3 or shape[1] < k or shape[2] < k:
                raise ShapeError(f"input {shape} is too small for {k}x{k} max pooling")
            return (shape[0], _window_out(shape[1], k, stride), _window_out(shape[2], k, stride))
        case Flatten():
            size = 1
            for d in shape:
                size *= d
            return (size,)
        case FullyConnected(in_features=n_in, out_features=n_out):
            if shape != (n_in,):
                raise ShapeError(f"fully connected layer expects ({n_in},), got {shape}")
            return (n_out,)
        case GlobalAvgPool():
            if len(shape) != 3:
                raise ShapeError(f"global average pooling expects (C, H, W), got {shape}")
            return (shape[0],)
        case ReLU() | Dropout() | Softmax():
            return shape
    raise ShapeError(f"unknown layer spec {spec!r}")


def shape_trace(specs: list[LayerSpec], input_shape: Shape) -> list[Shape]:
    """Output shape of every layer in order."""
    shapes = []
    shape = tuple(input_shape)
    for spec in specs:
        shape = output_shape(spec, shape)
        shapes.append(shape)
    return shapes


def parameter_count(spec: LayerSpec) -> int:
    match spec:
        case Conv(in_ch=in_ch, out_ch=out_ch, k=k):
            return out_ch * in_ch * k * k + out_ch
        case BatchNorm(ch=ch):
            return 2 * ch
        case FullyConnected(in_features=n_in, out_features=n_out):
            return n_in * n_out + n_out
    return 0


def count_parameters(specs: list[LayerSpec], input_shape: Shape) -> int:
    """Trainable parameter total, validated against the shape chain without allocating weights."""
    shape_trace(specs, input_shape)
    return sum(parameter_count(spec) for spec in specs)


def trunk_rows(specs: list[LayerSpec]) -> list[int]:
    """
    Layer index holding the output of each numbered row of the conv trunk.

    A row is a Conv with its BatchNorm/ReLU, or a MaxPool; the trunk ends at the
    first non-spatial layer.
    """
    rows: list[int] = []
    for i, spec in enumerate(specs):
        if not isinstance(spec, SPATIAL_SPECS):
            break
        if isinstance(spec, Conv | MaxPool) or not rows:
            rows.append(i)
        else:
            rows[-1] = i
    return rows
