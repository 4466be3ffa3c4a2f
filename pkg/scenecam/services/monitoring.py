import contextlib
import time
from collections.abc import Generator
from pathlib import Path

from prometheus_client import CollectorRegistry, Counter, Gauge, Histogram, generate_latest

from scenecam.utils.file_context import write_bytes_atomic

# Create a custom registry
metrics_registry = CollectorRegistry()

# Feature metrics
enhance_duration = Histogram(
    "scenecam_enhance_seconds",
    "Time spent enhancing one log-Mel image",
    ["kind"],
    buckets=(0.0005, 0.001, 0.005, 0.01, 0.05, 0.1, 0.5, 1.0, 5.0),
    registry=metrics_registry,
)

segments_extracted = Counter(
    "scenecam_segments_extracted_total",
    "Total number of 1 s segments turned into log-Mel images",
    registry=metrics_registry,
)

# Training metrics
train_epochs = Counter(
    "scenecam_train_epochs_total",
    "Total number of completed training epochs",
    registry=metrics_registry,
)

train_loss = Gauge(
    "scenecam_train_loss",
    "Mean cross-entropy of the most recent epoch",
    registry=metrics_registry,
)

# Evaluation metrics
eval_accuracy = Gauge(
    "scenecam_eval_accuracy",
    "Overall accuracy of the most recent evaluation",
    ["arch", "kind"],
    registry=metrics_registry,
)


@contextlib.contextmanager
def observe_enhance(kind: str) -> Generator[None, None, None]:
    start = time.perf_counter()
    try:
        yield
    finally:
        enhance_duration.labels(kind=kind).observe(time.perf_counter() - start)


def record_segments(count: int) -> None:
    segments_extracted.inc(count)


def record_epoch(loss: float) -> None:
    train_epochs.inc()
    train_loss.set(loss)


def record_evaluation(arch: str, kind: str, accuracy: float) -> None:
    eval_accuracy.labels(arch=arch, kind=kind).set(accuracy)


def write_metrics(path: str | Path) -> Path:
    """Dump the registry in the text exposition format."""
    return write_bytes_atomic(path, generate_latest(metrics_registry))
