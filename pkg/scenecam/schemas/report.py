from pydantic import BaseModel, Field, model_validator

from scenecam.schemas.features import EnhanceKind


class EvalReport(BaseModel):
    arch: str = "custom"
    kind: EnhanceKind = EnhanceKind.LOGMEL
    labels: list[str]
    overall_acc: float = Field(..., ge=0.0, le=1.0)
    per_class_acc: dict[str, float]
    confusion: list[list[int]]
    n_trials: int = Field(1, ge=1)
    trial_accs: list[float] = Field(default_factory=list)
    timing: dict[str, float] = Field(default_factory=dict)

    @model_validator(mode="after")
    def check_confusion(self) -> "EvalReport":
        n = len(self.labels)
        if len(self.confusion) != n or any(len(row) != n for row in self.confusion):
            raise ValueError("confusion matrix must be C x C for C labels")
        if any(v < 0 for row in self.confusion for v in row):
            raise ValueError("confusion counts must be nonnegative")
        return self

    @property
    def n_samples(self) -> int:
        return sum(sum(row) for row in self.confusion)

    def format_table(self) -> str:
        width = max([len(label) for label in self.labels] + [7])
        lines = [
            f"arch={self.arch} feature={self.kind.title} trials={self.n_trials}",
            f"{'class':<{width}}  {'acc':>6}  {'n':>5}",
        ]
        for label, row in zip(self.labels, self.confusion, strict=True):
            lines.append(f"{label:<{width}}  {self.per_class_acc[label]:>6.3f}  {sum(row):>5d}")
        lines.append(f"{'overall':<{width}}  {self.overall_acc:>6.3f}  {self.n_samples:>5d}")
        for name, seconds in self.timing.items():
            lines.append(f"time[{name}]={seconds:.3f}s")
        return "\n".join(lines)

    def to_records(self, prefix: str = "") -> list[str]:
        """Machine-readable key=value lines, one metric per line."""
        p = f"{prefix}." if prefix else ""
        records = [
            f"{p}arch={self.arch}",
            f"{p}kind={self.kind.value}",
            f"{p}n_trials={self.n_trials}",
            f"{p}n_samples={self.n_samples}",
            f"{p}overall_acc={self.overall_acc!r}",
        ]
        records += [f"{p}trial_acc.{i}={acc!r}" for i, acc in enumerate(self.trial_accs)]
        records += [f"{p}class_acc.{label}={acc!r}" for label, acc in self.per_class_acc.items()]
        for i, row in enumerate(self.confusion):
            records += [f"{p}confusion.{self.labels[i]}.{self.labels[j]}={v}" for j, v in enumerate(row)]
        records += [f"{p}timing.{name}={seconds!r}" for name, seconds in self.timing.items()]
        return records


class ExperimentGrid(BaseModel):
    """Accuracy grid: one row per feature kind, one column per architecture."""

    archs: list[str]
    kinds: list[EnhanceKind]
    reports: dict[str, EvalReport] = Field(default_factory=dict)

    @staticmethod
    def key(kind: EnhanceKind, arch: str) -> str:
        return f"{kind.value}/{arch}"

    def add(self, report: EvalReport) -> None:
        self.reports[self.key(report.kind, report.arch)] = report

    def accuracy(self, kind: EnhanceKind, arch: str) -> float | None:
        report = self.reports.get(self.key(kind, arch))
        return None if report is None else report.overall_acc

    def format_table(self) -> str:
        headers = [f"CNN-{arch.upper()}" for arch in self.archs]
        lines = ["Feature\\Model".ljust(14) + "".join(h.rjust(10) for h in headers)]
        for kind in self.kinds:
            cells = []
            for arch in self.archs:
                acc = self.accuracy(kind, arch)
                cells.append("-".rjust(10) if acc is None else f"{acc:10.3f}")
            lines.append(kind.title.ljust(14) + "".join(cells))
        return "\n".join(lines)

    def to_records(self) -> list[str]:
        records: list[str] = []
        for key in sorted(self.reports):
            records += self.reports[key].to_records(prefix=key.replace("/", "."))
        return records
