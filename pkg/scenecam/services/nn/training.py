"""
Mini-batch SGD with momentum and weight decay on softmax cross-entropy, and
segment-averaged prediction for whole recordings.
"""

import logging
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from scenecam.errors import EmptyInputError, ParameterError, ShapeError
from scenecam.schemas.training import EpochRecord, TrainConfig, TrainingLog
from scenecam.services.dsp import LogMelImage
from scenecam.services.monitoring import record_epoch
from scenecam.services.nn.layers import Array
from scenecam.services.nn.network import NetworkState, softmax_cross_entropy
from scenecam.services.nn.specs import BatchNorm

logger = logging.getLogger(__name__)

PREDICT_BATCH = 64


@dataclass
class LabeledFeatures:
    """Segment images stacked as (N, C, T, M) with one integer label per segment."""

    x: NDArray[np.float64]
    y: NDArray[np.int64]

    def __post_init__(self) -> None:
        self.x = np.asarray(self.x, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.int64)
        if self.x.shape[0] != self.y.shape[0]:
            raise ShapeError(f"{self.x.shape[0]} feature images but {self.y.shape[0]} labels")

    def __len__(self) -> int:
        return int(self.y.shape[0])


def _decays(layer_index: int, name: str, net: NetworkState) -> bool:
    """Weight decay applies to conv and fully connected weights only."""
    return name == "W" and not isinstance(net.specs[layer_index], BatchNorm)


def train(net: NetworkState, data: LabeledFeatures, cfg: TrainConfig) -> TrainingLog:
    """
    Train in place. Shuffling and dropout masks derive from cfg.seed, so two
    runs with the same seed and thread count produce identical parameters.
    """
    if len(data) == 0:
        raise EmptyInputError("training set is empty")
    if data.y.min() < 0 or data.y.max() >= net.n_classes:
        raise ParameterError(f"labels must lie in [0, {net.n_classes}), got [{data.y.min()}, {data.y.max()}]")

    shuffle_seq, dropout_seq = np.random.SeedSequence(cfg.seed).spawn(2)
    shuffle_rng = np.random.default_rng(shuffle_seq)
    net.rng = np.random.default_rng(dropout_seq)
    velocity: dict[tuple[int, str], Array] = {
        (i, name): np.zeros_like(p) for i, name, p in net.parameters()
    }

    log = TrainingLog()
    net.train()
    try:
        for epoch in range(cfg.epochs):
            lr = cfg.lr_at(epoch)
            order = shuffle_rng.permutation(len(data))
            total_loss = 0.0
            correct = 0
            for start in range(0, len(data), cfg.batch_size):
                idx = order[start : start + cfg.batch_size]
                xb, yb = data.x[idx], data.y[idx]
                probs = net.forward(xb, retain=True)
                loss, dlogits = softmax_cross_entropy(net.logits(), yb)
                grads = net.backward(dlogits)

                for i, name, param in net.parameters():
                    g = grads.params[i][name]
                    if cfg.weight_decay and _decays(i, name, net):
                        g = g + cfg.weight_decay * param
                    v = velocity[(i, name)]
                    v *= cfg.momentum
                    v -= lr * g
                    param += v

                total_loss += loss * len(idx)
                correct += int((probs.argmax(axis=1) == yb).sum())

            record = EpochRecord(epoch=epoch, loss=total_loss / len(data), train_acc=correct / len(data), lr=lr)
            log.epochs.append(record)
            record_epoch(record.loss)
            logger.info(f"epoch {epoch + 1}/{cfg.epochs} loss={record.loss:.4f} acc={record.train_acc:.3f} lr={lr:g}")
    finally:
        net.clear()
        net.eval()
    return log


def predict_proba(net: NetworkState, x: NDArray[np.float64]) -> Array:
    """Eval-mode class probabilities for a stack of inputs, computed in fixed-size batches."""
    net.eval()
    x = np.asarray(x, dtype=np.float64)
    chunks = [net.forward(x[i : i + PREDICT_BATCH]) for i in range(0, x.shape[0], PREDICT_BATCH)]
    return np.concatenate(chunks, axis=0)


def stack_segments(segments: Sequence[LogMelImage | NDArray[np.float64]]) -> Array:
    """Stack T x M images into an (N, 1, T, M) batch."""
    arrays = [s.values if isinstance(s, LogMelImage) else np.asarray(s, dtype=np.float64) for s in segments]
    return np.stack(arrays)[:, np.newaxis]


def predict_sample(net: NetworkState, segments: Sequence[LogMelImage | NDArray[np.float64]]) -> Array:
    """Mean of the per-segment probability vectors; its argmax labels the recording."""
    if len(segments) == 0:
        raise EmptyInputError("a recording needs at least one segment")
    return predict_proba(net, stack_segments(segments)).mean(axis=0)
