import numpy as np
import pytest

from scenecam.errors import ConfigError, DuplicatePathError, NotFoundError, ParameterError, ParseError
from scenecam.schemas.synth import SynthConfig
from scenecam.services.data import (
    BACKGROUND_RMS,
    META_FILE,
    EventTemplate,
    class_label,
    format_meta,
    load_dcase_index,
    make_synth,
    parse_meta,
)
from scenecam.services.dsp import load_wav

from .helpers import write_tone


def write_meta(root, text: str, files: list[str] = ()):
    root.mkdir(parents=True, exist_ok=True)
    (root / META_FILE).write_text(text, encoding="utf-8")
    for rel in files:
        write_tone(root / rel, 1.0)
    return root


class TestMetaParsing:
    def test_two_and_three_column_lines(self, tmp_path):
        entries = parse_meta("a.wav\tbeach\n\nb.wav\tbus\teval\n", tmp_path)
        assert [(e.relative_path, e.scene_label, e.split) for e in entries] == [
            ("a.wav", "beach", "train"),
            ("b.wav", "bus", "eval"),
        ]
        assert entries[0].audio_path == tmp_path / "a.wav"

    def test_windows_line_endings(self, tmp_path):
        entries = parse_meta("a.wav\tbeach\r\nb.wav\tbus\r\n", tmp_path)
        assert [e.scene_label for e in entries] == ["beach", "bus"]

    def test_wrong_field_count_names_the_line(self, tmp_path):
        with pytest.raises(ParseError) as exc:
            parse_meta("a.wav\tbeach\nb.wav\n", tmp_path)
        assert exc.value.line_number == 2
        assert "line 2" in str(exc.value)

    def test_duplicate_path(self, tmp_path):
        with pytest.raises(DuplicatePathError) as exc:
            parse_meta("a.wav\tbeach\na.wav\tbus\n", tmp_path)
        assert exc.value.path == "a.wav"
        assert exc.value.line_number == 2

    def test_empty_meta(self, tmp_path):
        with pytest.raises(ParseError):
            parse_meta("\n\n", tmp_path)

    def test_format_is_parseable(self, tmp_path):
        entries = parse_meta("x/a.wav\tpark\teval\nx/b.wav\tpark\n", tmp_path)
        assert parse_meta(format_meta(entries), tmp_path) == entries


class TestDatasetIndex:
    def test_label_set_is_sorted_and_files_kept_in_order(self, tmp_path):
        root = write_meta(tmp_path / "d", "z.wav\ttram\na.wav\tbeach\n", ["z.wav", "a.wav"])
        index = load_dcase_index(root)
        assert index.label_set == ["beach", "tram"]
        assert [e.relative_path for e in index.entries] == ["z.wav", "a.wav"]
        assert index.label_id("tram") == 1
        assert index.missing == []

    def test_missing_audio_is_recorded(self, tmp_path, caplog):
        root = write_meta(tmp_path / "d", "a.wav\tbeach\nb.wav\tbus\n", ["a.wav"])
        index = load_dcase_index(root)
        assert index.missing == ["b.wav"]
        assert "b.wav" in caplog.text

    def test_class_count_check(self, tmp_path):
        root = write_meta(tmp_path / "d", "a.wav\tbeach\n", ["a.wav"])
        with pytest.raises(ConfigError):
            load_dcase_index(root, expected_classes=15)

    def test_missing_meta(self, tmp_path):
        with pytest.raises(NotFoundError):
            load_dcase_index(tmp_path)

    def test_invalid_utf8(self, tmp_path):
        (tmp_path / META_FILE).write_bytes(b"\xff\xfe\tbeach\n")
        with pytest.raises(ParseError):
            load_dcase_index(tmp_path)

    def test_splits_and_counts(self, tmp_path):
        root = write_meta(tmp_path / "d", "a.wav\tbeach\nb.wav\tbeach\teval\nc.wav\tbus\n", [])
        index = load_dcase_index(root)
        assert index.splits == ["eval", "train"]
        assert index.class_counts("train") == {"beach": 1, "bus": 1}
        assert index.class_counts() == {"beach": 2, "bus": 1}


class TestEventTemplate:
    def test_unit_rms_and_length(self):
        burst = EventTemplate(0.2, 1000.0, 1000.0).render(8000)
        assert burst.size == 1600
        assert np.sqrt(np.mean(burst**2)) == pytest.approx(1.0)
        assert abs(burst[0]) < 1e-12

    def test_chirp_flag(self):
        assert EventTemplate(0.2, 500.0, 2000.0).is_chirp
        assert not EventTemplate(0.2, 500.0, 500.0).is_chirp


class TestSynth:
    def test_layout_and_split(self, small_corpus):
        assert small_corpus.label_set == [class_label(0), class_label(1)] == ["scene00", "scene01"]
        assert small_corpus.class_counts("train") == {"scene00": 2, "scene01": 2}
        assert small_corpus.class_counts("eval") == {"scene00": 1, "scene01": 1}
        first = small_corpus.entries[0]
        assert first.relative_path == "audio/scene00_000.wav"
        w = load_wav(first.audio_path)
        assert (len(w), w.sample_rate) == (12000, 8000)

    def test_same_config_gives_identical_bytes(self, tmp_path):
        cfg = SynthConfig(n_classes=2, samples_per_class=2, sample_s=1.0, sample_rate=8000, seed=11, eval_fraction=0.5)
        a = make_synth(cfg, tmp_path / "a")
        b = make_synth(cfg, tmp_path / "b")
        assert (tmp_path / "a" / META_FILE).read_bytes() == (tmp_path / "b" / META_FILE).read_bytes()
        for ea, eb in zip(a.entries, b.entries, strict=True):
            assert ea.audio_path.read_bytes() == eb.audio_path.read_bytes()

    def test_different_seeds_differ(self, tmp_path):
        cfg = SynthConfig(n_classes=1, samples_per_class=2, sample_s=1.0, sample_rate=8000, eval_fraction=0.5)
        a = make_synth(cfg, tmp_path / "a")
        b = make_synth(cfg.model_copy(update={"seed": 1}), tmp_path / "b")
        assert a.entries[0].audio_path.read_bytes() != b.entries[0].audio_path.read_bytes()

    def test_background_level_without_events(self, tmp_path):
        cfg = SynthConfig(n_classes=1, samples_per_class=2, sample_s=2.0, sample_rate=8000, event_rate=0.0, eval_fraction=0.5)
        index = make_synth(cfg, tmp_path / "c")
        for entry in index.entries:
            samples = load_wav(entry.audio_path).samples
            assert np.sqrt(np.mean(samples**2)) == pytest.approx(BACKGROUND_RMS, rel=1e-3)

    def test_envelopes_shape_the_spectrum(self, tmp_path):
        cfg = SynthConfig(
            n_classes=2, samples_per_class=2, sample_s=2.0, sample_rate=8000, event_rate=0.0, n_bands=8, eval_fraction=0.5
        )
        low = np.array([0.0, 0.0, 0.0, 0.0, -30.0, -30.0, -30.0, -30.0])
        index = make_synth(cfg, tmp_path / "e", envelopes=np.stack([low, low[::-1]]))

        def centroid(path):
            power = np.abs(np.fft.rfft(load_wav(path).samples)) ** 2
            freqs = np.fft.rfftfreq(2 * (power.size - 1), 1 / 8000)
            return float((freqs * power).sum() / power.sum())

        lows = [centroid(e.audio_path) for e in index.entries if e.scene_label == "scene00"]
        highs = [centroid(e.audio_path) for e in index.entries if e.scene_label == "scene01"]
        assert max(lows) < min(highs)

    def test_rejects_bad_envelopes(self, tmp_path):
        cfg = SynthConfig(n_classes=2, samples_per_class=2, eval_fraction=0.5)
        with pytest.raises(ParameterError):
            make_synth(cfg, tmp_path / "x", envelopes=np.zeros((3, 8)))

    def test_split_needs_training_samples(self):
        with pytest.raises(ValueError):
            SynthConfig(samples_per_class=1, eval_fraction=0.9)
