"""
Dataset ingestion and the synthetic desk-scale corpus.

A corpus root holds `meta.txt` with tab-separated `relative/path<TAB>label`
lines (an optional third column tags the split). The synthetic corpus makes
background texture the only class cue: every class owns a fixed random
spectral envelope applied to white noise, while tone bursts and chirps come
from one event pool shared by all classes.
"""

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.typing import NDArray

from scenecam.errors import ConfigError, DuplicatePathError, NotFoundError, ParameterError, ParseError
from scenecam.schemas.dataset import DatasetEntry, DatasetIndex
from scenecam.schemas.synth import SynthConfig
from scenecam.services.dsp import Waveform, hz_to_mel, save_wav
from scenecam.utils.file_context import staged_directory, write_text_atomic

logger = logging.getLogger(__name__)

META_FILE = "meta.txt"
DCASE2017_CLASSES = 15

BACKGROUND_RMS = 0.1
ENVELOPE_RANGE_DB = 30.0
EVENT_MIN_S = 0.1
EVENT_MAX_S = 0.5
EVENT_MIN_HZ = 200.0
PEAK_LIMIT = 0.99


# -- meta file ---------------------------------------------------------------


def parse_meta(text: str, root: Path, default_split: str = "train") -> list[DatasetEntry]:
    entries: list[DatasetEntry] = []
    seen: set[str] = set()
    for line_number, raw in enumerate(text.split("\n"), start=1):
        line = raw.rstrip("\r")
        if not line.strip():
            continue
        fields = line.split("\t")
        if len(fields) not in (2, 3):
            raise ParseError(f"expected 'path<TAB>label[<TAB>split]', got {len(fields)} field(s)", line_number)
        fields = [f.strip() for f in fields]
        if not all(fields):
            raise ParseError("empty field", line_number)
        rel, label = fields[0], fields[1]
        split = fields[2] if len(fields) == 3 else default_split
        if rel in seen:
            raise DuplicatePathError(rel, line_number)
        seen.add(rel)
        entries.append(DatasetEntry(relative_path=rel, audio_path=root / rel, scene_label=label, split=split))
    if not entries:
        raise ParseError("meta file has no entries")
    return entries


def load_dcase_index(
    root: str | Path,
    split: str = "train",
    meta_name: str = META_FILE,
    expected_classes: int | None = None,
) -> DatasetIndex:
    """
    Parse `root/meta.txt` in file order. Lines without a split column take
    `split`. Missing audio files are logged and recorded on the index.
    """
    root = Path(root)
    meta = root / meta_name
    if not meta.is_file():
        raise NotFoundError(f"meta file not found: {meta}")
    try:
        text = meta.read_text(encoding="utf-8")
    except UnicodeDecodeError as e:
        raise ParseError(f"{meta} is not valid UTF-8 ({e})")

    entries = parse_meta(text, root, default_split=split)
    label_set = sorted({e.scene_label for e in entries})
    if expected_classes is not None and len(label_set) != expected_classes:
        raise ConfigError(f"{meta} names {len(label_set)} scene labels, expected {expected_classes}")

    missing = [e.relative_path for e in entries if not e.audio_path.is_file()]
    for rel in missing:
        logger.warning(f"Audio file listed in {meta_name} is missing: {rel}")
    index = DatasetIndex(root=root, entries=entries, label_set=label_set, missing=missing)
    logger.info(f"Indexed {len(entries)} recordings, {len(label_set)} labels, splits {index.splits}")
    return index


def format_meta(entries: list[DatasetEntry]) -> str:
    return "".join(f"{e.relative_path}\t{e.scene_label}\t{e.split}\n" for e in entries)


# -- synthetic corpus --------------------------------------------------------


@dataclass(frozen=True)
class EventTemplate:
    """A tone burst (f_start == f_end) or linear chirp with a Hann envelope."""

    duration_s: float
    f_start: float
    f_end: float

    @property
    def is_chirp(self) -> bool:
        return self.f_start != self.f_end

    def render(self, sample_rate: int) -> NDArray[np.float64]:
        n = max(2, int(round(self.duration_s * sample_rate)))
        t = np.arange(n) / sample_rate
        sweep = (self.f_end - self.f_start) / self.duration_s
        phase = 2.0 * np.pi * (self.f_start * t + 0.5 * sweep * t**2)
        tone = np.sin(phase) * np.hanning(n)
        return tone / np.sqrt(np.mean(tone**2))


def class_label(class_id: int) -> str:
    return f"scene{class_id:02d}"


def random_envelopes(cfg: SynthConfig, rng: np.random.Generator) -> NDArray[np.float64]:
    """n_classes x n_bands gains in dB, one fixed envelope per class."""
    return rng.uniform(-ENVELOPE_RANGE_DB, 0.0, size=(cfg.n_classes, cfg.n_bands))


def event_pool(cfg: SynthConfig, rng: np.random.Generator) -> list[EventTemplate]:
    top = 0.4 * cfg.sample_rate
    pool = []
    for _ in range(cfg.event_pool_size):
        duration = float(rng.uniform(EVENT_MIN_S, min(EVENT_MAX_S, cfg.sample_s)))
        f_start = float(rng.uniform(EVENT_MIN_HZ, top))
        f_end = float(rng.uniform(EVENT_MIN_HZ, top)) if rng.random() < 0.5 else f_start
        pool.append(EventTemplate(duration, f_start, f_end))
    return pool


def envelope_gain(envelope_db: NDArray[np.float64], n_fft_bins: int, sample_rate: int) -> NDArray[np.float64]:
    """Linear gain per rFFT bin; band centres are equally spaced on the mel scale."""
    freqs = np.linspace(0.0, sample_rate / 2.0, n_fft_bins)
    band_mels = np.linspace(0.0, float(hz_to_mel(sample_rate / 2.0)), envelope_db.size)
    return 10.0 ** (np.interp(hz_to_mel(freqs), band_mels, envelope_db) / 20.0)


def shaped_noise(
    envelope_db: NDArray[np.float64], n_samples: int, sample_rate: int, rng: np.random.Generator
) -> NDArray[np.float64]:
    """White noise filtered by a constant spectral envelope, scaled to BACKGROUND_RMS."""
    spectrum = np.fft.rfft(rng.standard_normal(n_samples))
    spectrum *= envelope_gain(envelope_db, spectrum.size, sample_rate)
    texture = np.fft.irfft(spectrum, n=n_samples)
    return texture * (BACKGROUND_RMS / np.sqrt(np.mean(texture**2)))


def render_sample(
    cfg: SynthConfig,
    envelope_db: NDArray[np.float64],
    pool: list[EventTemplate],
    rng: np.random.Generator,
) -> Waveform:
    n = int(round(cfg.sample_s * cfg.sample_rate))
    audio = shaped_noise(envelope_db, n, cfg.sample_rate, rng)
    event_rms = BACKGROUND_RMS * 10.0 ** (cfg.event_gain_db / 20.0)
    for _ in range(int(rng.poisson(cfg.event_rate))):
        event = pool[int(rng.integers(len(pool)))].render(cfg.sample_rate)[:n]
        onset = int(rng.integers(0, n - event.size + 1))
        audio[onset : onset + event.size] += event_rms * event

    peak = np.max(np.abs(audio))
    if peak > PEAK_LIMIT:
        audio *= PEAK_LIMIT / peak
    return Waveform(audio, cfg.sample_rate)


def make_synth(
    cfg: SynthConfig,
    out_dir: str | Path,
    envelopes: NDArray[np.float64] | None = None,
) -> DatasetIndex:
    """
    Write the corpus under out_dir (WAVs in audio/ plus meta.txt) and return its
    index. The same config produces a byte-identical tree.
    """
    out_dir = Path(out_dir)
    envelope_seq, pool_seq, sample_seq = np.random.SeedSequence(cfg.seed).spawn(3)
    if envelopes is None:
        envelopes = random_envelopes(cfg, np.random.default_rng(envelope_seq))
    envelopes = np.asarray(envelopes, dtype=np.float64)
    if envelopes.ndim != 2 or envelopes.shape[0] != cfg.n_classes or envelopes.shape[1] < 2:
        raise ParameterError(f"envelopes must be {cfg.n_classes} x (>= 2 bands) in dB, got {envelopes.shape}")
    pool = event_pool(cfg, np.random.default_rng(pool_seq))
    sample_seqs = sample_seq.spawn(cfg.n_classes * cfg.samples_per_class)

    entries: list[DatasetEntry] = []
    with staged_directory(out_dir) as staging:
        for class_id in range(cfg.n_classes):
            label = class_label(class_id)
            for i in range(cfg.samples_per_class):
                rng = np.random.default_rng(sample_seqs[class_id * cfg.samples_per_class + i])
                rel = f"audio/{label}_{i:03d}.wav"
                save_wav(render_sample(cfg, envelopes[class_id], pool, rng), staging / rel)
                split = "train" if i < cfg.train_per_class else "eval"
                entries.append(DatasetEntry(relative_path=rel, audio_path=out_dir / rel, scene_label=label, split=split))
        write_text_atomic(staging / META_FILE, format_meta(entries))

    logger.info(
        f"Synthesized {len(entries)} recordings in {out_dir}: {cfg.n_classes} classes, "
        f"{cfg.train_per_class} train / {cfg.eval_per_class} eval per class"
    )
    return load_dcase_index(out_dir)
