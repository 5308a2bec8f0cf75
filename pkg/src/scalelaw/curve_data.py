"""Learning-curve measurements: points, curves, curve dictionaries and their file formats.

Curve files are CSV with the header ``n,score``; ``#`` lines are comments.
A dictionary manifest is a JSON list of flat records with the keys
``path``, ``name``, ``classes`` and ``task`` (paths relative to the manifest).
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

HEADER = "n,score"


class CurveError(ValueError):
    """Base class for invalid curve data."""


class CurveParseError(CurveError):
    def __init__(self, lineno: int, message: str):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


class ScoreDomainError(CurveError):
    pass


class DuplicateSizeError(CurveError):
    pass


class SplitRangeError(CurveError):
    pass


class Task(str, Enum):
    CLASSIFICATION = "classification"
    DETECTION = "detection"


@dataclass(frozen=True, order=True)
class PerformancePoint:
    n: int
    v: float

    def __post_init__(self):
        if self.n < 1:
            raise CurveError(f"sample count must be >= 1, got {self.n}")
        if not (0.0 < self.v < 1.0) or not math.isfinite(self.v):
            raise ScoreDomainError(f"score at n={self.n} must lie in (0, 1), got {self.v}")


@dataclass(frozen=True)
class LearningCurve:
    name: str
    classes: int
    points: tuple[PerformancePoint, ...]
    task: Task = Task.CLASSIFICATION
    fit_count: int | None = None
    # generator switch point, recorded for synthetic curves only
    true_switch: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "points", tuple(self.points))
        object.__setattr__(self, "task", Task(self.task))
        if self.classes < 1:
            raise CurveError(f"{self.name}: classes must be >= 1")
        if not self.points:
            raise CurveError(f"{self.name}: curve has no points")
        ns = [p.n for p in self.points]
        for a, b in zip(ns, ns[1:]):
            if b == a:
                raise DuplicateSizeError(f"{self.name}: duplicate sample count n={a}")
            if b < a:
                raise CurveError(f"{self.name}: points must be strictly increasing in n")
        if self.fit_count is None:
            object.__setattr__(self, "fit_count", len(self.points))
        elif not 1 <= self.fit_count <= len(self.points):
            raise SplitRangeError(f"{self.name}: fit_count {self.fit_count} out of range")

    def __len__(self) -> int:
        return len(self.points)

    @property
    def n(self) -> list[int]:
        return [p.n for p in self.points]

    @property
    def v(self) -> list[float]:
        return [p.v for p in self.points]

    @property
    def fit_points(self) -> tuple[PerformancePoint, ...]:
        return self.points[: self.fit_count]

    @property
    def eval_points(self) -> tuple[PerformancePoint, ...]:
        return self.points[self.fit_count :]

    def with_split(self, m: int) -> "LearningCurve":
        if not 1 <= m < len(self.points):
            raise SplitRangeError(f"m={m} must satisfy 1 <= m < {len(self.points)}")
        return replace(self, fit_count=m)


@dataclass(frozen=True)
class CurveDictionary:
    entries: tuple[LearningCurve, ...]
    task: Task = Task.CLASSIFICATION

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))
        object.__setattr__(self, "task", Task(self.task))
        names = [c.name for c in self.entries]
        if len(set(names)) != len(names):
            raise CurveError("curve names must be unique within a dictionary")
        for c in self.entries:
            if c.task != self.task:
                raise CurveError(f"{c.name}: task {c.task.value} differs from dictionary task {self.task.value}")

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def __getitem__(self, name: str) -> LearningCurve:
        for c in self.entries:
            if c.name == name:
                return c
        raise KeyError(name)


def make_curve(name: str, classes: int, pairs: Iterable[tuple[int, float]], task=Task.CLASSIFICATION,
               fit_count: int | None = None) -> LearningCurve:
    points = sorted(PerformancePoint(int(n), float(v)) for n, v in pairs)
    return LearningCurve(name=name, classes=classes, points=tuple(points), task=task, fit_count=fit_count)


def parse_curve(text: str, classes: int, name: str, task: Task | str = Task.CLASSIFICATION) -> LearningCurve:
    """Parse the contents of a curve CSV. Points are returned sorted by ``n``."""
    header_seen = False
    points: list[PerformancePoint] = []
    seen: dict[int, int] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if not header_seen:
            if line.replace(" ", "") != HEADER:
                raise CurveParseError(lineno, f"expected header {HEADER!r}, got {line!r}")
            header_seen = True
            continue
        cells = [c.strip() for c in line.split(",")]
        if len(cells) != 2:
            raise CurveParseError(lineno, f"expected 2 fields, got {len(cells)}")
        try:
            n_float = float(cells[0])
            v = float(cells[1])
        except ValueError as exc:
            raise CurveParseError(lineno, str(exc)) from None
        if n_float != int(n_float):
            raise CurveParseError(lineno, f"sample count must be an integer, got {cells[0]}")
        n = int(n_float)
        if n in seen:
            raise DuplicateSizeError(f"line {lineno}: duplicate n={n} (first on line {seen[n]})")
        seen[n] = lineno
        try:
            points.append(PerformancePoint(n, v))
        except ScoreDomainError as exc:
            raise ScoreDomainError(f"line {lineno}: {exc}") from None
        except CurveError as exc:
            raise CurveParseError(lineno, str(exc)) from None
    if not header_seen:
        raise CurveParseError(1, "missing header")
    if not points:
        raise CurveError(f"{name}: no data rows")
    points.sort()
    return LearningCurve(name=name, classes=classes, points=tuple(points), task=Task(task))


def serialize_curve(curve: LearningCurve | Sequence[PerformancePoint], comments: Sequence[str] = ()) -> str:
    points = curve.points if isinstance(curve, LearningCurve) else curve
    lines = [f"# {c}" for c in comments]
    lines.append(HEADER)
    lines.extend(f"{p.n},{p.v!r}" for p in points)
    return "\n".join(lines) + "\n"


def split_points(curve: LearningCurve, m: int):
    """Return ``(fit, eval)`` point tuples: the first ``m`` points and the rest."""
    split = curve.with_split(m)
    return split.fit_points, split.eval_points


def read_curve(path: str | Path, classes: int, name: str | None = None, task=Task.CLASSIFICATION) -> LearningCurve:
    path = Path(path)
    return parse_curve(path.read_text(encoding="utf-8"), classes, name or path.stem, task)


def write_curve(curve: LearningCurve, path: str | Path, comments: Sequence[str] = ()) -> None:
    Path(path).write_text(serialize_curve(curve, comments), encoding="utf-8")


@dataclass
class ManifestRecord:
    path: str
    name: str
    classes: int
    task: str = Task.CLASSIFICATION.value
    extra: dict = field(default_factory=dict)


def load_manifest(path: str | Path) -> CurveDictionary:
    path = Path(path)
    records = json.loads(path.read_text(encoding="utf-8"))
    if not isinstance(records, list):
        raise CurveError(f"{path}: manifest must be a list of records")
    curves = []
    for i, rec in enumerate(records):
        missing = {"path", "name", "classes", "task"} - set(rec)
        if missing:
            raise CurveError(f"{path}: record {i} lacks {sorted(missing)}")
        curve = read_curve(path.parent / rec["path"], int(rec["classes"]), rec["name"], rec["task"])
        if rec.get("fit_count") is not None:
            curve = curve.with_split(int(rec["fit_count"]))
        if rec.get("true_switch") is not None:
            curve = replace(curve, true_switch=float(rec["true_switch"]))
        curves.append(curve)
    if not curves:
        raise CurveError(f"{path}: empty manifest")
    return CurveDictionary(tuple(curves), curves[0].task)


def write_dictionary(dictionary: CurveDictionary, directory: str | Path, manifest_name="manifest.json") -> Path:
    """Write one CSV per curve plus a manifest; returns the manifest path."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    records = []
    for curve in dictionary:
        fname = f"{curve.name}.csv"
        write_curve(curve, directory / fname)
        rec = {"path": fname, "name": curve.name, "classes": curve.classes, "task": curve.task.value}
        if curve.fit_count < len(curve):
            rec["fit_count"] = curve.fit_count
        if curve.true_switch is not None:
            rec["true_switch"] = curve.true_switch
        records.append(rec)
    out = directory / manifest_name
    out.write_text(json.dumps(records, indent=1) + "\n", encoding="utf-8")
    return out
