from enum import Enum

from pydantic import BaseModel, Field, model_validator

from scenecam.config import settings
from scenecam.errors import ParameterError


class EnhanceKind(str, Enum):
    """Input feature types compared in the experiment grid."""

    LOGMEL = "logmel"
    DOG = "dog"
    SOBEL = "sobel"
    MEDIAN = "median"

    @property
    def title(self) -> str:
        return _TITLES[self]

    @classmethod
    def parse(cls, value: "str | EnhanceKind") -> "EnhanceKind":
        if isinstance(value, EnhanceKind):
            return value
        try:
            return cls(value.strip().lower())
        except ValueError:
            choices = ", ".join(k.value for k in cls)
            raise ParameterError(f"unknown feature kind {value!r} (expected one of {choices})")


_TITLES = {
    EnhanceKind.LOGMEL: "LogMel-128",
    EnhanceKind.DOG: "DoG",
    EnhanceKind.SOBEL: "Sobel",
    EnhanceKind.MEDIAN: "Median",
}


class StftConfig(BaseModel):
    model_config = {"frozen": True}

    window_ms: float = Field(settings.window_ms, gt=0)
    hop_ms: float = Field(settings.hop_ms, gt=0)
    fft_len: int = Field(settings.fft_len, ge=1)
    n_mels: int = Field(settings.n_mels, ge=1)
    target_frames: int | None = Field(settings.target_frames, ge=1)
    log_floor: float = Field(settings.log_floor, gt=0)

    @model_validator(mode="after")
    def check_framing(self) -> "StftConfig":
        if not self.window_ms > self.hop_ms:
            raise ValueError("window_ms must exceed hop_ms")
        return self

    def window_samples(self, sample_rate: int) -> int:
        return int(round(self.window_ms * sample_rate / 1000.0))

    def hop_samples(self, sample_rate: int) -> int:
        return max(1, int(round(self.hop_ms * sample_rate / 1000.0)))

    def padded_length(self, sample_rate: int) -> int | None:
        """Sample count that yields exactly target_frames frames, or None when padding is off."""
        if self.target_frames is None:
            return None
        return self.window_samples(sample_rate) + (self.target_frames - 1) * self.hop_samples(sample_rate)

    def frames_per_second(self) -> float:
        return 1000.0 / self.hop_ms
