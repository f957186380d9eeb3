"""Prediction triplets, the teacher's class-average table and geometry features."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Tuple, Union

import numpy as np

from fusionkd.objects.errors import DataError

PROB_TOLERANCE = 1e-9


def _check_probability_rows(values: np.ndarray, name: str) -> None:
    if np.any(values < -PROB_TOLERANCE) or np.any(values > 1.0 + PROB_TOLERANCE):
        raise DataError(f"{name} entries must lie in [0, 1]")
    if np.any(np.abs(values.sum(axis=-1) - 1.0) > PROB_TOLERANCE):
        raise DataError(f"{name} must sum to 1")


@dataclass(frozen=True)
class PredictionTriplet:
    student_probs: np.ndarray
    teacher_probs: np.ndarray
    ground_truth: np.ndarray
    class_index: int

    def __post_init__(self) -> None:
        s = np.asarray(self.student_probs, dtype=np.float64)
        t = np.asarray(self.teacher_probs, dtype=np.float64)
        g = np.asarray(self.ground_truth, dtype=np.float64)
        if not (s.ndim == 1 and s.shape == t.shape == g.shape):
            raise DataError("Triplet vectors must be 1-D with equal length")
        _check_probability_rows(s, "student_probs")
        _check_probability_rows(t, "teacher_probs")
        if not (np.all((g == 0.0) | (g == 1.0)) and g.sum() == 1.0):
            raise DataError("ground_truth must be one-hot")
        if int(self.class_index) != int(np.argmax(g)):
            raise DataError("class_index must equal argmax(ground_truth)")
        object.__setattr__(self, "student_probs", s)
        object.__setattr__(self, "teacher_probs", t)
        object.__setattr__(self, "ground_truth", g)
        object.__setattr__(self, "class_index", int(self.class_index))

    @property
    def num_classes(self) -> int:
        return int(self.student_probs.size)

    @classmethod
    def from_label(cls, student_probs, teacher_probs, label: int) -> "PredictionTriplet":
        g = np.zeros(np.shape(student_probs)[0])
        g[int(label)] = 1.0
        return cls(student_probs, teacher_probs, g, int(label))


@dataclass(frozen=True)
class ClassAverageTable:
    """Row c is the frozen teacher's mean probability vector over class c."""

    rows: np.ndarray

    def __post_init__(self) -> None:
        rows = np.asarray(self.rows, dtype=np.float64)
        if rows.ndim != 2 or rows.shape[0] != rows.shape[1]:
            raise DataError(f"ClassAverageTable must be C x C, got {rows.shape}")
        _check_probability_rows(rows, "class-average rows")
        rows = rows.copy()
        rows.setflags(write=False)
        object.__setattr__(self, "rows", rows)

    @property
    def num_classes(self) -> int:
        return int(self.rows.shape[0])

    def row(self, class_index: int) -> np.ndarray:
        return self.rows[int(class_index)]

    def to_text(self) -> str:
        lines = [",".join(f"{value:.17g}" for value in row) for row in self.rows]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "ClassAverageTable":
        try:
            rows = [
                [float(cell) for cell in line.split(",")]
                for line in text.splitlines()
                if line.strip()
            ]
            return cls(np.array(rows, dtype=np.float64))
        except ValueError as exc:
            raise DataError(f"Malformed class-average table: {exc}") from exc

    def save(self, path: Union[str, Path]) -> Path:
        target = Path(path)
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_text(self.to_text())
        return target

    @classmethod
    def load(cls, path: Union[str, Path]) -> "ClassAverageTable":
        return cls.from_text(Path(path).read_text())


@dataclass(frozen=True)
class GeometryFeature:
    delta: np.ndarray
    layout: Tuple[str, ...]
    num_classes: int

    def slices(self) -> Dict[str, np.ndarray]:
        c = self.num_classes
        return {name: self.delta[i * c : (i + 1) * c] for i, name in enumerate(self.layout)}

    def slice(self, name: str) -> np.ndarray:
        return self.slices()[name]

