from pathlib import Path

from pydantic import BaseModel, Field, model_validator


class DatasetEntry(BaseModel):
    model_config = {"frozen": True}

    relative_path: str = Field(..., min_length=1)
    audio_path: Path
    scene_label: str = Field(..., min_length=1)
    split: str = "train"


class DatasetIndex(BaseModel):
    """Parsed meta file: entries in file order plus the sorted distinct label set."""

    root: Path
    entries: list[DatasetEntry]
    label_set: list[str]
    missing: list[str] = Field(default_factory=list, description="Indexed paths with no audio file on disk")

    @model_validator(mode="after")
    def check_entries(self) -> "DatasetIndex":
        labels = set(self.label_set)
        if len(labels) != len(self.label_set):
            raise ValueError("label_set contains duplicates")
        unknown = {e.scene_label for e in self.entries} - labels
        if unknown:
            raise ValueError(f"labels outside label_set: {sorted(unknown)}")
        paths = [e.relative_path for e in self.entries]
        if len(set(paths)) != len(paths):
            raise ValueError("audio paths must be unique")
        return self

    @property
    def splits(self) -> list[str]:
        return sorted({e.split for e in self.entries})

    def split(self, name: str) -> list[DatasetEntry]:
        return [e for e in self.entries if e.split == name]

    def label_id(self, label: str) -> int:
        return self.label_set.index(label)

    def class_counts(self, split: str | None = None) -> dict[str, int]:
        entries = self.entries if split is None else self.split(split)
        counts = dict.fromkeys(self.label_set, 0)
        for e in entries:
            counts[e.scene_label] += 1
        return counts
