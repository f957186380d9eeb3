"""Dataset value types and the TGDS binary fixture codec."""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Optional, Sequence, Union

import numpy as np
import pandas as pd

from fusionkd.objects.errors import DataError

DATASET_MAGIC = b"TGDS"
DATASET_FORMAT_VERSION = 1
LABEL_COLUMN = "label"

_HEADER = struct.Struct("<4sIIII")


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    num_classes: int
    ids: np.ndarray = field(default=None)  # type: ignore[assignment]
    is_outlier: np.ndarray = field(default=None)  # type: ignore[assignment]
    image_mode: bool = False
    provenance: str = ""

    def __post_init__(self) -> None:
        features = np.ascontiguousarray(self.features, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.int64)
        if features.ndim != 2 or features.shape[0] < 1:
            raise DataError(f"Dataset needs an N x d feature matrix with N >= 1, got {features.shape}")
        n = features.shape[0]
        ids = np.arange(n, dtype=np.int64) if self.ids is None else np.asarray(self.ids, dtype=np.int64)
        is_outlier = (
            np.zeros(n, dtype=bool) if self.is_outlier is None else np.asarray(self.is_outlier, dtype=bool)
        )
        if labels.shape != (n,) or ids.shape != (n,) or is_outlier.shape != (n,):
            raise DataError("labels, ids and is_outlier must have one entry per sample")
        if self.num_classes < 2:
            raise DataError(f"Dataset needs at least 2 classes, got {self.num_classes}")
        if labels.min() < 0 or labels.max() >= self.num_classes:
            raise DataError(f"Labels must lie in [0, {self.num_classes})")
        if not np.all(np.isfinite(features)):
            raise DataError("Feature values must be finite")
        if self.image_mode and (features.min() < 0.0 or features.max() > 1.0):
            raise DataError("Image-mode features must lie in [0, 1]")
        if np.unique(ids).size != n:
            raise DataError("Sample ids must be unique")
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "ids", ids)
        object.__setattr__(self, "is_outlier", is_outlier)
        object.__setattr__(self, "num_classes", int(self.num_classes))

    @property
    def n(self) -> int:
        return int(self.features.shape[0])

    @property
    def dim(self) -> int:
        return int(self.features.shape[1])

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.num_classes)

    def subset(self, indices: Sequence[int], provenance: str = "") -> "Dataset":
        indices = np.asarray(indices, dtype=np.int64)
        return Dataset(
            features=self.features[indices],
            labels=self.labels[indices],
            num_classes=self.num_classes,
            ids=self.ids[indices],
            is_outlier=self.is_outlier[indices],
            image_mode=self.image_mode,
            provenance=provenance or self.provenance,
        )

    def append(
        self,
        features: np.ndarray,
        labels: np.ndarray,
        is_outlier: np.ndarray,
        provenance: str,
        first_new_id: Optional[int] = None,
    ) -> "Dataset":
        """New samples get ids from ``first_new_id`` (default: after the current maximum)."""
        count = len(labels)
        start = int(self.ids.max()) + 1 if first_new_id is None else int(first_new_id)
        new_ids = np.arange(count, dtype=np.int64) + start
        return Dataset(
            features=np.vstack([self.features, np.asarray(features, dtype=np.float64).reshape(count, self.dim)]),
            labels=np.concatenate([self.labels, np.asarray(labels, dtype=np.int64)]),
            num_classes=self.num_classes,
            ids=np.concatenate([self.ids, new_ids]),
            is_outlier=np.concatenate([self.is_outlier, np.asarray(is_outlier, dtype=bool)]),
            image_mode=self.image_mode,
            provenance=provenance,
        )

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(self.features, columns=[f"f{j}" for j in range(self.dim)])
        frame[LABEL_COLUMN] = self.labels
        return frame

    def write_delimited(self, path: Union[str, Path]) -> Path:
        target = Path(path)
        target.parent.mkdir(parents=True, exist_ok=True)
        self.to_frame().to_csv(target, index=False, float_format="%.17g")
        return target

    def to_bytes(self) -> bytes:
        header = _HEADER.pack(DATASET_MAGIC, DATASET_FORMAT_VERSION, self.n, self.dim, self.num_classes)
        return b"".join(
            [
                header,
                self.features.astype("<f8").tobytes(order="C"),
                self.labels.astype("<i8").tobytes(),
                self.is_outlier.astype(np.uint8).tobytes(),
            ]
        )

    @classmethod
    def from_bytes(cls, payload: bytes, provenance: str = "tgds") -> "Dataset":
        """Ids are not part of the format; loaded samples are renumbered 0..N-1."""
        if len(payload) < _HEADER.size:
            raise DataError("Truncated TGDS file")
        magic, version, n, d, num_classes = _HEADER.unpack_from(payload, 0)
        if magic != DATASET_MAGIC:
            raise DataError("Not a TGDS dataset file (bad magic)")
        if version != DATASET_FORMAT_VERSION:
            raise DataError(f"Unsupported TGDS format version: {version}")
        expected = _HEADER.size + 8 * n * d + 8 * n + n
        if len(payload) != expected:
            raise DataError(f"TGDS payload has {len(payload)} bytes, expected {expected}")
        offset = _HEADER.size
        features = np.frombuffer(payload, dtype="<f8", count=n * d, offset=offset).reshape(n, d)
        offset += 8 * n * d
        labels = np.frombuffer(payload, dtype="<i8", count=n, offset=offset)
        offset += 8 * n
        is_outlier = np.frombuffer(payload, dtype=np.uint8, count=n, offset=offset).astype(bool)
        image_mode = bool(features.min() >= 0.0 and features.max() <= 1.0)
        return cls(
            features=features.astype(np.float64),
            labels=labels.astype(np.int64),
            num_classes=num_classes,
            is_outlier=is_outlier,
            image_mode=image_mode,
            provenance=provenance,
        )

    def save_binary(self, path: Union[str, Path]) -> Path:
        target = Path(path)
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_bytes(self.to_bytes())
        return target

    @classmethod
    def load_binary(cls, path: Union[str, Path]) -> "Dataset":
        source = Path(path)
        if not source.exists():
            raise DataError(f"Dataset file not found: {source}")
        return cls.from_bytes(source.read_bytes(), provenance=f"tgds:{source.name}")


@dataclass(frozen=True)
class DatasetSplits:
    train: Dataset
    val: Dataset
    test: Dataset

    def __post_init__(self) -> None:
        parts = {"train": self.train, "val": self.val, "test": self.test}
        dims = {part.dim for part in parts.values()}
        classes = {part.num_classes for part in parts.values()}
        if len(dims) != 1 or len(classes) != 1:
            raise DataError("Splits must share feature width and class count")
        names = list(parts)
        for i, first in enumerate(names):
            for second in names[i + 1 :]:
                shared = np.intersect1d(parts[first].ids, parts[second].ids)
                if shared.size:
                    raise DataError(
                        f"Splits {first} and {second} share sample id {int(shared[0])}"
                    )

    @property
    def num_classes(self) -> int:
        return self.train.num_classes

    @property
    def dim(self) -> int:
        return self.train.dim

    def sizes(self) -> Dict[str, int]:
        return {"train": self.train.n, "val": self.val.n, "test": self.test.n}
