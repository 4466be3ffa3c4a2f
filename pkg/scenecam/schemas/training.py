import math

from pydantic import BaseModel, Field

from scenecam.schemas.features import EnhanceKind, StftConfig


class TrainConfig(BaseModel):
    model_config = {"frozen": True}

    lr: float = Field(0.01, ge=0)
    momentum: float = Field(0.9, ge=0, lt=1)
    batch_size: int = Field(64, ge=1)
    epochs: int = Field(30, ge=0)
    seed: int = 0
    weight_decay: float = Field(5e-4, ge=0)
    lr_decay_at: float | None = Field(2.0 / 3.0, gt=0, le=1, description="Fraction of epochs after which lr decays")
    lr_decay_factor: float = Field(0.1, gt=0, le=1)

    def lr_at(self, epoch: int) -> float:
        # rounded so 2/3 of 30 epochs is 20, not 19.999...
        if self.lr_decay_at is not None and epoch >= math.floor(round(self.lr_decay_at * self.epochs, 9)):
            return self.lr * self.lr_decay_factor
        return self.lr


class EpochRecord(BaseModel):
    epoch: int
    loss: float
    train_acc: float = Field(..., ge=0.0, le=1.0)
    lr: float


class TrainingLog(BaseModel):
    epochs: list[EpochRecord] = Field(default_factory=list)

    @property
    def final_loss(self) -> float:
        return self.epochs[-1].loss if self.epochs else float("nan")


class CheckpointMeta(BaseModel):
    """Free-form metadata stored alongside the layer records of a checkpoint."""

    arch: str = "custom"
    labels: list[str] = Field(default_factory=list)
    feature_kind: EnhanceKind = EnhanceKind.LOGMEL
    input_shape: tuple[int, ...]
    n_classes: int
    stft: StftConfig = Field(default_factory=StftConfig)
    sample_rate: int | None = None
