"""Shared fixtures for the scenecam test suite."""

import numpy as np
import pytest

from scenecam.schemas.synth import SynthConfig
from scenecam.services.data import make_synth


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def small_corpus(tmp_path_factory: pytest.TempPathFactory):
    """Two classes, three 1.5 s recordings each (two train, one eval)."""
    cfg = SynthConfig(n_classes=2, samples_per_class=3, sample_s=1.5, sample_rate=8000, seed=3, event_rate=1.0)
    return make_synth(cfg, tmp_path_factory.mktemp("corpus") / "synth")
