from scenecam.schemas.dataset import DatasetEntry, DatasetIndex
from scenecam.schemas.features import EnhanceKind, StftConfig
from scenecam.schemas.report import EvalReport, ExperimentGrid
from scenecam.schemas.synth import SynthConfig
from scenecam.schemas.training import CheckpointMeta, EpochRecord, TrainConfig, TrainingLog

__all__ = [
    "CheckpointMeta",
    "DatasetEntry",
    "DatasetIndex",
    "EnhanceKind",
    "EpochRecord",
    "EvalReport",
    "ExperimentGrid",
    "StftConfig",
    "SynthConfig",
    "TrainConfig",
    "TrainingLog",
]
