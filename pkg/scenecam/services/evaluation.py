"""
Feature pipeline, evaluation and the experiment grid.

Every recording goes segment -> log_mel -> enhance -> normalize; a recording
is labelled by the argmax of its mean segment probabilities.
"""

import logging
import os
from collections.abc import Iterable, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import partial
from pathlib import Path
from typing import NamedTuple

import numpy as np

from scenecam.config import settings
from scenecam.errors import ConfigError, EmptyInputError, ParameterError
from scenecam.schemas.dataset import DatasetEntry, DatasetIndex
from scenecam.schemas.features import EnhanceKind, StftConfig
from scenecam.schemas.report import EvalReport, ExperimentGrid
from scenecam.schemas.training import TrainConfig
from scenecam.services.dsp import LogMelImage, NormStats, apply_norm, extract_segments, fit_norm, load_wav
from scenecam.services.enhance import enhance
from scenecam.services.monitoring import record_evaluation, record_segments
from scenecam.services.nn.builders import build_arch
from scenecam.services.nn.network import NetworkState
from scenecam.services.nn.training import LabeledFeatures, predict_sample, stack_segments, train
from scenecam.utils.context_managers import timed_operation

logger = logging.getLogger(__name__)


@dataclass
class SplitFeatures:
    """Per-recording segment images of one split, in index order."""

    segments: list[list[LogMelImage]]
    labels: list[str]
    paths: list[str]
    sample_rates: list[int] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def sample_rate(self) -> int | None:
        """The rate shared by every recording; None when unknown or mixed."""
        rates = set(self.sample_rates)
        if len(rates) > 1:
            logger.warning(f"Recordings have mixed sample rates {sorted(rates)} Hz")
        return rates.pop() if len(rates) == 1 else None

    def all_segments(self) -> list[LogMelImage]:
        return [img for rec in self.segments for img in rec]

    def normalized(self, stats: NormStats) -> "SplitFeatures":
        segments = [[apply_norm(img, stats) for img in rec] for rec in self.segments]
        return SplitFeatures(segments, list(self.labels), list(self.paths), list(self.sample_rates))


def resolve_threads(value: str | int) -> int:
    """`auto` means one worker per CPU; anything else must be a positive integer."""
    if isinstance(value, str) and value.strip().lower() == "auto":
        return os.cpu_count() or 1
    try:
        threads = int(value)
    except ValueError:
        raise ParameterError(f"threads must be 'auto' or a positive integer, got {value!r}")
    if threads < 1:
        raise ParameterError(f"threads must be positive, got {threads}")
    return threads


def recording_features(
    path: str | Path,
    stft: StftConfig,
    kind: EnhanceKind,
    median_kernel: tuple[int, int] = settings.median_kernel,
) -> tuple[list[LogMelImage], int]:
    """Enhanced segment images of one recording and its sample rate."""
    wave = load_wav(path)
    segments = extract_segments(wave, stft)
    record_segments(len(segments))
    return [enhance(img, kind, median_kernel) for img in segments], wave.sample_rate


def check_sample_rate(expected: int | None, rates: Iterable[int], source: str) -> bool:
    """Warn when audio differs from the rate a model was trained at; a model without a rate accepts anything."""
    if expected is None:
        return True
    other = sorted(set(rates) - {expected})
    if other:
        logger.warning(f"{source} is sampled at {other} Hz but the model was trained at {expected} Hz")
        return False
    return True


def extract_split(
    entries: Sequence[DatasetEntry],
    stft: StftConfig,
    kind: EnhanceKind,
    median_kernel: tuple[int, int] = settings.median_kernel,
    threads: int = 1,
) -> SplitFeatures:
    """Features of every present recording; recordings are independent so they may run in parallel."""
    present = [e for e in entries if e.audio_path.is_file()]
    for e in entries:
        if not e.audio_path.is_file():
            logger.warning(f"Skipping missing recording {e.relative_path}")
    if not present:
        raise EmptyInputError("no audio files to extract features from")

    work = partial(recording_features, stft=stft, kind=kind, median_kernel=median_kernel)
    paths = [e.audio_path for e in present]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(work, paths))
    else:
        results = [work(p) for p in paths]
    return SplitFeatures(
        [segments for segments, _ in results],
        [e.scene_label for e in present],
        [e.relative_path for e in present],
        [rate for _, rate in results],
    )


def labeled_segments(split: SplitFeatures, index: DatasetIndex) -> LabeledFeatures:
    """Flatten to one training example per segment, each carrying its recording's label id."""
    x = stack_segments(split.all_segments())
    y = np.array([index.label_id(label) for label, rec in zip(split.labels, split.segments, strict=True) for _ in rec])
    return LabeledFeatures(x, y)


def build_report(
    labels: Sequence[str],
    y_true: Sequence[int],
    y_pred: Sequence[int],
    arch: str = "custom",
    kind: EnhanceKind = EnhanceKind.LOGMEL,
) -> EvalReport:
    """Confusion matrix (rows: truth, columns: prediction) and the accuracies derived from it."""
    n = len(labels)
    confusion = np.zeros((n, n), dtype=np.int64)
    np.add.at(confusion, (np.asarray(y_true, dtype=np.int64), np.asarray(y_pred, dtype=np.int64)), 1)
    return report_from_confusion(labels, confusion, arch, kind)


def report_from_confusion(
    labels: Sequence[str],
    confusion: np.ndarray,
    arch: str,
    kind: EnhanceKind,
    n_trials: int = 1,
    trial_accs: list[float] | None = None,
    timing: dict[str, float] | None = None,
) -> EvalReport:
    total = int(confusion.sum())
    if total == 0:
        raise EmptyInputError("no samples were evaluated")
    rows = confusion.sum(axis=1)
    per_class = {
        label: float(confusion[i, i] / rows[i]) if rows[i] else 0.0 for i, label in enumerate(labels)
    }
    return EvalReport(
        arch=arch,
        kind=kind,
        labels=list(labels),
        overall_acc=float(np.trace(confusion) / total),
        per_class_acc=per_class,
        confusion=confusion.astype(int).tolist(),
        n_trials=n_trials,
        trial_accs=trial_accs or [],
        timing=timing or {},
    )


def _class_names(net: NetworkState, index_labels: Sequence[str]) -> list[str]:
    labels = list(net.labels) if net.labels else list(index_labels)
    if len(labels) > net.n_classes:
        raise ConfigError(f"{len(labels)} scene labels but the network has {net.n_classes} classes")
    return labels


def evaluate_features(
    net: NetworkState,
    split: SplitFeatures,
    labels: Sequence[str],
    kind: EnhanceKind = EnhanceKind.LOGMEL,
) -> EvalReport:
    """Score already normalized features; `labels` orders the network's classes."""
    ids = {label: i for i, label in enumerate(labels)}
    unknown = sorted(set(split.labels) - ids.keys())
    if unknown:
        raise ConfigError(f"labels {unknown} are not among the network's classes {list(labels)}")
    if len(labels) > net.n_classes:
        raise ConfigError(f"{len(labels)} scene labels but the network has {net.n_classes} classes")

    y_true = [ids[label] for label in split.labels]
    y_pred = [int(np.argmax(predict_sample(net, rec))) for rec in split.segments]
    # Predictions of classes without a label still count as errors
    n = max(len(labels), max(y_pred, default=0) + 1)
    names = list(labels) + [f"class{i}" for i in range(len(labels), n)]
    report = build_report(names, y_true, y_pred, arch=net.arch, kind=kind)
    record_evaluation(net.arch, kind.value, report.overall_acc)
    logger.info(f"{net.arch}/{kind.value}: accuracy {report.overall_acc:.3f} on {len(split)} recordings")
    return report


def evaluate(
    net: NetworkState,
    index: DatasetIndex,
    split: str,
    kind: EnhanceKind | str,
    stats: NormStats,
    stft: StftConfig | None = None,
    median_kernel: tuple[int, int] = settings.median_kernel,
    threads: int = 1,
    expected_rate: int | None = None,
) -> EvalReport:
    kind = EnhanceKind.parse(kind)
    labels = _class_names(net, index.label_set)
    entries = index.split(split)
    if not entries:
        raise EmptyInputError(f"split {split!r} is empty (splits: {index.splits})")
    unknown = sorted({e.scene_label for e in entries} - set(labels))
    if unknown:
        raise ConfigError(f"labels {unknown} are not among the network's classes {labels}")

    with timed_operation(f"extract {split}/{kind.value}") as extract_timing:
        features = extract_split(entries, stft or StftConfig(), kind, median_kernel, threads)
    check_sample_rate(expected_rate, features.sample_rates, f"split {split!r}")
    with timed_operation(f"evaluate {split}") as eval_timing:
        report = evaluate_features(net, features.normalized(stats), labels, kind)
    report.timing = {kind.value: extract_timing.seconds, "predict": eval_timing.seconds}
    return report


@dataclass
class PreparedExperiment:
    """Normalized features of both splits for one feature kind, shared across architectures and trials."""

    kind: EnhanceKind
    labels: list[str]
    train: LabeledFeatures
    eval: SplitFeatures
    stats: NormStats
    timing: dict[str, float] = field(default_factory=dict)

    @property
    def input_shape(self) -> tuple[int, int, int]:
        _, c, t, m = self.train.x.shape
        return (c, t, m)


class TrainingSet(NamedTuple):
    data: LabeledFeatures
    stats: NormStats
    sample_rate: int | None


def prepare_training(
    index: DatasetIndex,
    kind: EnhanceKind | str,
    stft: StftConfig | None = None,
    median_kernel: tuple[int, int] = settings.median_kernel,
    threads: int = 1,
    split: str = "train",
) -> TrainingSet:
    """Normalized training segments, the statistics fitted on them and the corpus sample rate."""
    kind = EnhanceKind.parse(kind)
    entries = index.split(split)
    if not entries:
        raise ConfigError(f"index has no {split!r} split (splits: {index.splits})")
    logger.info(f"Training split {split!r}: {index.class_counts(split)}")
    raw = extract_split(entries, stft or StftConfig(), kind, median_kernel, threads)
    stats = fit_norm(raw.all_segments())
    return TrainingSet(labeled_segments(raw.normalized(stats), index), stats, raw.sample_rate)


def prepare_experiment(
    index: DatasetIndex,
    kind: EnhanceKind | str,
    stft: StftConfig | None = None,
    median_kernel: tuple[int, int] = settings.median_kernel,
    threads: int = 1,
    train_split: str = "train",
    eval_split: str = "eval",
) -> PreparedExperiment:
    kind = EnhanceKind.parse(kind)
    stft = stft or StftConfig()
    for name in (train_split, eval_split):
        if not index.split(name):
            raise ConfigError(f"index has no {name!r} split (splits: {index.splits})")

    with timed_operation(f"features {kind.value}", logger.info) as timing:
        train_set, stats, _ = prepare_training(index, kind, stft, median_kernel, threads, train_split)
        eval_raw = extract_split(index.split(eval_split), stft, kind, median_kernel, threads)
    return PreparedExperiment(
        kind, list(index.label_set), train_set, eval_raw.normalized(stats), stats, {kind.value: timing.seconds}
    )


def train_model(
    prepared: PreparedExperiment,
    arch: str,
    cfg: TrainConfig,
    width: float = 1.0,
    fc_dim: int | None = None,
) -> NetworkState:
    net = build_arch(
        arch, len(prepared.labels), prepared.input_shape, seed=cfg.seed, width=width, labels=prepared.labels, fc_dim=fc_dim
    )
    train(net, prepared.train, cfg)
    return net


def run_experiment(
    index: DatasetIndex,
    arch: str,
    kind: EnhanceKind | str,
    cfg: TrainConfig,
    trials: int = 3,
    width: float = 1.0,
    fc_dim: int | None = None,
    stft: StftConfig | None = None,
    median_kernel: tuple[int, int] = settings.median_kernel,
    threads: int = 1,
    prepared: PreparedExperiment | None = None,
) -> EvalReport:
    """
    Train `trials` models with seeds cfg.seed, cfg.seed + 1, ... and pool their
    evaluations: the confusion matrix is summed, so the overall accuracy is the
    mean trial accuracy.
    """
    if trials < 1:
        raise ParameterError(f"trials must be positive, got {trials}")
    kind = EnhanceKind.parse(kind)
    if prepared is None:
        prepared = prepare_experiment(index, kind, stft, median_kernel, threads)

    n = len(prepared.labels)
    confusion = np.zeros((n, n), dtype=np.int64)
    trial_accs: list[float] = []
    timing = dict(prepared.timing) | {"train": 0.0, "evaluate": 0.0}
    for trial in range(trials):
        trial_cfg = cfg.model_copy(update={"seed": cfg.seed + trial})
        with timed_operation(f"train {arch}/{kind.value} trial {trial + 1}/{trials}", logger.info) as t_train:
            net = train_model(prepared, arch, trial_cfg, width, fc_dim)
        with timed_operation(f"evaluate {arch}/{kind.value} trial {trial + 1}/{trials}") as t_eval:
            report = evaluate_features(net, prepared.eval, prepared.labels, kind)
        timing["train"] += t_train.seconds
        timing["evaluate"] += t_eval.seconds
        confusion += np.asarray(report.confusion, dtype=np.int64)[:n, :n]
        trial_accs.append(report.overall_acc)

    pooled = report_from_confusion(
        prepared.labels, confusion, arch, kind, n_trials=trials, trial_accs=trial_accs, timing=timing
    )
    logger.info(f"{arch}/{kind.value}: mean accuracy {pooled.overall_acc:.3f} over {trials} trial(s)")
    return pooled


def run_grid(
    index: DatasetIndex,
    archs: Sequence[str],
    kinds: Sequence[EnhanceKind | str],
    cfg: TrainConfig,
    trials: int = 3,
    width: float = 1.0,
    fc_dim: int | None = None,
    stft: StftConfig | None = None,
    median_kernel: tuple[int, int] = settings.median_kernel,
    threads: int = 1,
) -> ExperimentGrid:
    """Every (feature kind, architecture) pair; features are computed once per kind."""
    if not archs or not kinds:
        raise ParameterError("experiment grid needs at least one architecture and one feature kind")
    parsed = [EnhanceKind.parse(k) for k in kinds]
    grid = ExperimentGrid(archs=list(archs), kinds=parsed)
    for kind in parsed:
        prepared = prepare_experiment(index, kind, stft, median_kernel, threads)
        for arch in archs:
            grid.add(run_experiment(index, arch, kind, cfg, trials, width, fc_dim, prepared=prepared))
    return grid
