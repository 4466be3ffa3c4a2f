import math

from pydantic import Field
from pydantic_settings import BaseSettings


class Settings(BaseSettings):
    model_config = {
        "env_prefix": "SCENECAM_",
        "case_sensitive": False,
        "extra": "ignore",
    }

    # Audio front end
    window_ms: float = 25.0
    hop_ms: float = 10.0
    fft_len: int = 2048
    n_mels: int = 128
    target_frames: int = 100  # frames per 1 s segment
    log_floor: float = 1e-10
    std_floor: float = 1e-8

    # Segmentation
    segment_s: float = 1.0
    segment_hop_s: float = 0.5

    # Enhancement
    median_kernel: tuple[int, int] = (51, 7)
    dog_sigmas: tuple[float, float] = Field(default=(1.0, math.sqrt(2.0)))

    # Visualisation
    overlay_alpha: float = 0.4

    # Runtime
    log_level: str = "INFO"
    threads: str = "1"


settings = Settings()
