"""Training log records and the delimited dumps written by a distillation run."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Union

import numpy as np
import pandas as pd

from fusionkd.models.prediction import PredictionTriplet
from fusionkd.models.reports import PARTITION_NAMES
from fusionkd.objects.errors import DataError

FLOAT_FORMAT = "%.17g"

ALPHA_DUMP_COLUMNS = ("sample_id", "epoch", "alpha", "teacher_correct", "st_discrepancy", "is_outlier")
STAT_KEYS = ("all", "normal", "outlier") + PARTITION_NAMES


def _write_frame(frame: pd.DataFrame, path: Union[str, Path]) -> Path:
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(target, index=False, float_format=FLOAT_FORMAT, na_rep="")
    return target


def _read_frame(path: Union[str, Path], required: tuple, what: str) -> pd.DataFrame:
    source = Path(path)
    if not source.exists():
        raise DataError(f"{what} not found: {source}")
    try:
        frame = pd.read_csv(source, float_precision="round_trip")
    except (pd.errors.EmptyDataError, pd.errors.ParserError) as exc:
        raise DataError(f"Cannot parse {what} {source}: {exc}") from exc
    missing = [column for column in required if column not in frame.columns]
    if missing:
        raise DataError(f"{what} {source} lacks columns: {', '.join(missing)}")
    return frame


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    steps: int
    train_loss: float
    val_ce: float
    val_acc: float
    batch_checksum: str
    # key -> (mean, std); NaN where the partition is empty
    alpha_stats: Dict[str, tuple] = field(default_factory=dict)

    def to_row(self) -> Dict[str, object]:
        row: Dict[str, object] = {
            "epoch": self.epoch,
            "steps": self.steps,
            "train_loss": self.train_loss,
            "val_ce": self.val_ce,
            "val_acc": self.val_acc,
        }
        for key in STAT_KEYS:
            mean, std = self.alpha_stats.get(key, (np.nan, np.nan))
            row[f"alpha_mean_{key}"] = mean
            row[f"alpha_std_{key}"] = std
        row["batch_checksum"] = self.batch_checksum
        return row


@dataclass(frozen=True)
class AlphaSnapshot:
    """Per-sample fusion ratios over the training set at the end of one epoch."""

    epoch: int
    sample_ids: np.ndarray
    alphas: np.ndarray
    teacher_correct: np.ndarray
    st: np.ndarray
    is_outlier: np.ndarray

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "sample_id": self.sample_ids,
                "epoch": np.full(self.sample_ids.size, self.epoch, dtype=np.int64),
                "alpha": self.alphas,
                "teacher_correct": self.teacher_correct.astype(int),
                "st_discrepancy": self.st,
                "is_outlier": self.is_outlier.astype(int),
            }
        )


@dataclass
class TrainingLog:
    epochs: List[EpochRecord] = field(default_factory=list)
    snapshots: List[AlphaSnapshot] = field(default_factory=list)
    best_epoch: int = 0
    stopped_early: bool = False

    def add_epoch(self, record: EpochRecord) -> None:
        self.epochs.append(record)

    def add_snapshot(self, snapshot: AlphaSnapshot) -> None:
        self.snapshots.append(snapshot)

    def val_acc_history(self) -> List[float]:
        return [record.val_acc for record in self.epochs]

    def batch_checksums(self) -> List[str]:
        return [record.batch_checksum for record in self.epochs]

    def epoch_frame(self) -> pd.DataFrame:
        if not self.epochs:
            return pd.DataFrame(columns=list(EpochRecord(0, 0, 0.0, 0.0, 0.0, "").to_row()))
        return pd.DataFrame([record.to_row() for record in self.epochs])

    def alpha_frame(self) -> pd.DataFrame:
        if not self.snapshots:
            return pd.DataFrame(columns=list(ALPHA_DUMP_COLUMNS))
        return pd.concat([snapshot.to_frame() for snapshot in self.snapshots], ignore_index=True)

    def final_snapshot(self) -> Optional[AlphaSnapshot]:
        return self.snapshots[-1] if self.snapshots else None

    def write_epochs(self, path: Union[str, Path]) -> Path:
        return _write_frame(self.epoch_frame(), path)

    def write_alpha_dump(self, path: Union[str, Path]) -> Path:
        return _write_frame(self.alpha_frame(), path)


def read_alpha_dump(path: Union[str, Path]) -> pd.DataFrame:
    frame = _read_frame(path, ALPHA_DUMP_COLUMNS, "Alpha dump")
    frame["sample_id"] = frame["sample_id"].astype(np.int64)
    frame["epoch"] = frame["epoch"].astype(np.int64)
    frame["teacher_correct"] = frame["teacher_correct"].astype(bool)
    frame["is_outlier"] = frame["is_outlier"].astype(bool)
    return frame


@dataclass(frozen=True)
class TripletDump:
    """Final student / frozen teacher probabilities (temperature 1) per training sample."""

    sample_ids: np.ndarray
    labels: np.ndarray
    student_probs: np.ndarray
    teacher_probs: np.ndarray
    is_outlier: np.ndarray

    @property
    def num_classes(self) -> int:
        return int(self.student_probs.shape[1])

    def triplets(self) -> List[PredictionTriplet]:
        return [
            PredictionTriplet.from_label(s, t, label)
            for s, t, label in zip(self.student_probs, self.teacher_probs, self.labels)
        ]

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(
            {
                "sample_id": self.sample_ids,
                "label": self.labels,
                "is_outlier": self.is_outlier.astype(int),
            }
        )
        for c in range(self.num_classes):
            frame[f"s{c}"] = self.student_probs[:, c]
        for c in range(self.num_classes):
            frame[f"t{c}"] = self.teacher_probs[:, c]
        return frame

    def write(self, path: Union[str, Path]) -> Path:
        return _write_frame(self.to_frame(), path)

    @classmethod
    def read(cls, path: Union[str, Path]) -> "TripletDump":
        frame = _read_frame(path, ("sample_id", "label", "is_outlier", "s0", "t0"), "Triplet dump")
        num_classes = sum(1 for column in frame.columns if column.startswith("s") and column[1:].isdigit())
        student_cols = [f"s{c}" for c in range(num_classes)]
        teacher_cols = [f"t{c}" for c in range(num_classes)]
        missing = [column for column in teacher_cols if column not in frame.columns]
        if missing:
            raise DataError(f"Triplet dump {path} lacks columns: {', '.join(missing)}")
        if frame[student_cols + teacher_cols].isna().any().any():
            raise DataError(f"Triplet dump {path} has empty probability cells")
        return cls(
            sample_ids=frame["sample_id"].to_numpy(dtype=np.int64),
            labels=frame["label"].to_numpy(dtype=np.int64),
            student_probs=frame[student_cols].to_numpy(dtype=np.float64),
            teacher_probs=frame[teacher_cols].to_numpy(dtype=np.float64),
            is_outlier=frame["is_outlier"].to_numpy().astype(bool),
        )
