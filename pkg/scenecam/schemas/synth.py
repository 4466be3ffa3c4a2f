from pydantic import BaseModel, Field, model_validator


class SynthConfig(BaseModel):
    """Desk-scale surrogate corpus: class-specific background textures plus a shared event pool."""

    model_config = {"frozen": True}

    n_classes: int = Field(4, ge=1)
    samples_per_class: int = Field(60, ge=1)
    sample_s: float = Field(10.0, gt=0)
    sample_rate: int = Field(22050, gt=0)
    seed: int = 0
    event_rate: float = Field(2.0, ge=0, description="Mean foreground events per sample")
    eval_fraction: float = Field(1.0 / 3.0, ge=0, lt=1)
    n_bands: int = Field(24, ge=2, description="Resolution of the spectral envelopes")
    event_pool_size: int = Field(8, ge=1)
    event_gain_db: float = 6.0

    @model_validator(mode="after")
    def check_split(self) -> "SynthConfig":
        if self.eval_per_class >= self.samples_per_class and self.eval_fraction > 0:
            raise ValueError("eval_fraction leaves no training samples")
        return self

    @property
    def eval_per_class(self) -> int:
        return int(round(self.samples_per_class * self.eval_fraction))

    @property
    def train_per_class(self) -> int:
        return self.samples_per_class - self.eval_per_class
