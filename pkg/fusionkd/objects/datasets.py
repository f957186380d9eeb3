"""Dataset ingestion, synthesis, balancing, outlier injection and splitting.

Every function is deterministic in (inputs, seed).
"""

from __future__ import annotations

from pathlib import Path
from typing import List, Union

import numpy as np
import pandas as pd

from fusionkd.logger import get_logger
from fusionkd.models.dataset import LABEL_COLUMN, Dataset, DatasetSplits
from fusionkd.models.run_config import DataSection
from fusionkd.objects.errors import ConfigError, DataError
from fusionkd.objects.seeding import stream

OUTLIER_MEAN = 0.5
OUTLIER_STD = 1.0


def _logger():
    return get_logger(name="fusionkd_data")


def _as_seed(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(int(seed))


def load_delimited(
    path: Union[str, Path],
    label_column: str = LABEL_COLUMN,
    normalize: bool = True,
) -> Dataset:
    """Comma-separated file with a header row and an integral label column."""
    source = Path(path)
    if not source.exists():
        raise DataError(f"Data file not found: {source}")
    try:
        frame = pd.read_csv(source, on_bad_lines="error")
    except pd.errors.EmptyDataError as exc:
        raise DataError(f"Data file is empty: {source}") from exc
    except pd.errors.ParserError as exc:
        raise DataError(f"Malformed row in {source}: {exc}") from exc
    if frame.empty:
        raise DataError(f"Data file has no rows: {source}")
    if label_column not in frame.columns:
        raise DataError(f"Label column '{label_column}' not found in {source}")

    feature_frame = frame.drop(columns=[label_column])
    numeric = feature_frame.apply(pd.to_numeric, errors="coerce")
    bad_rows = np.flatnonzero(numeric.isna().any(axis=1).to_numpy())
    if bad_rows.size:
        raise DataError(f"Malformed row {int(bad_rows[0])} in {source}: non-numeric feature")
    raw_labels = pd.to_numeric(frame[label_column], errors="coerce").to_numpy(dtype=np.float64)
    non_integral = np.flatnonzero(~np.isfinite(raw_labels) | (raw_labels != np.round(raw_labels)))
    if non_integral.size:
        raise DataError(f"Non-integral label at row {int(non_integral[0])} in {source}")
    labels = raw_labels.astype(np.int64)
    if labels.min() < 0:
        raise DataError(f"Negative label in {source}")

    features = numeric.to_numpy(dtype=np.float64)
    if normalize:
        features = min_max_normalize(features)
    num_classes = max(int(labels.max()) + 1, 2)
    _logger().info(
        "Loaded delimited data. path=%s rows=%s cols=%s classes=%s",
        source,
        features.shape[0],
        features.shape[1],
        num_classes,
    )
    return Dataset(
        features=features,
        labels=labels,
        num_classes=num_classes,
        image_mode=normalize,
        provenance=f"delimited:{source.name}",
    )


def min_max_normalize(features: np.ndarray) -> np.ndarray:
    """Per-column min-max scaling to [0, 1]; constant columns map to 0."""
    low = features.min(axis=0)
    span = features.max(axis=0) - low
    safe_span = np.where(span > 0.0, span, 1.0)
    scaled = (features - low) / safe_span
    scaled[:, span == 0.0] = 0.0
    return np.clip(scaled, 0.0, 1.0)


def synth_gaussian_clusters(
    num_classes: int,
    per_class: int,
    dim: int,
    spread: float,
    label_noise: float = 0.0,
    seed=0,
) -> Dataset:
    """Isotropic Gaussian blobs around fixed per-class centres, clipped to [0, 1]."""
    if num_classes < 2:
        raise ConfigError(f"num_classes must be >= 2, got {num_classes}")
    if per_class < 1:
        raise ConfigError(f"per_class must be >= 1, got {per_class}")
    if dim < 1:
        raise ConfigError(f"dim must be >= 1, got {dim}")
    if not spread > 0.0:
        raise ConfigError(f"spread must be > 0, got {spread}")
    if not 0.0 <= label_noise < 1.0:
        raise ConfigError(f"label_noise must lie in [0, 1), got {label_noise}")

    rng = _as_seed(seed)
    centres = rng.uniform(0.2, 0.8, size=(num_classes, dim))
    labels = np.repeat(np.arange(num_classes), per_class)
    noise = rng.normal(0.0, spread, size=(labels.size, dim))
    features = np.clip(centres[labels] + noise, 0.0, 1.0)

    flips = int(round(label_noise * labels.size))
    if flips:
        flipped = rng.choice(labels.size, size=flips, replace=False)
        shift = rng.integers(1, num_classes, size=flips)
        labels = labels.copy()
        labels[flipped] = (labels[flipped] + shift) % num_classes

    return Dataset(
        features=features,
        labels=labels,
        num_classes=num_classes,
        image_mode=True,
        provenance=f"synthetic:C={num_classes},per_class={per_class},d={dim},spread={spread},noise={label_noise}",
    )


def make_imbalanced(dataset: Dataset, ratio: float, seed=0) -> Dataset:
    """Subsample so class sizes decay geometrically and max/min equals ``ratio``."""
    if ratio < 1.0:
        raise ConfigError(f"imbalance ratio must be >= 1, got {ratio}")
    counts = dataset.class_counts()
    if np.any(counts == 0):
        raise DataError(f"Class {int(np.flatnonzero(counts == 0)[0])} is empty")
    if ratio == 1.0:
        return dataset
    rng = _as_seed(seed)
    largest = int(counts.max())
    c = dataset.num_classes
    keep: List[np.ndarray] = []
    for cls in range(c):
        target = int(round(largest * ratio ** (-cls / (c - 1))))
        members = np.flatnonzero(dataset.labels == cls)
        target = max(1, min(target, members.size))
        keep.append(np.sort(rng.choice(members, size=target, replace=False)))
    indices = np.sort(np.concatenate(keep))
    return dataset.subset(indices, provenance=f"{dataset.provenance}|imbalance={ratio}")


def oversample_minority(dataset: Dataset, seed=0, first_new_id=None) -> Dataset:
    """Duplicate random members of each class until every class matches the largest."""
    counts = dataset.class_counts()
    if np.any(counts == 0):
        raise DataError(f"Class {int(np.flatnonzero(counts == 0)[0])} is empty; cannot oversample")
    rng = _as_seed(seed)
    target = int(counts.max())
    picks: List[np.ndarray] = []
    for cls in range(dataset.num_classes):
        deficit = target - int(counts[cls])
        if deficit:
            members = np.flatnonzero(dataset.labels == cls)
            picks.append(rng.choice(members, size=deficit, replace=True))
    if not picks:
        return dataset
    chosen = np.concatenate(picks)
    _logger().info("Oversampled minority classes. added=%s target_per_class=%s", chosen.size, target)
    return dataset.append(
        dataset.features[chosen],
        dataset.labels[chosen],
        dataset.is_outlier[chosen],
        provenance=f"{dataset.provenance}|oversampled",
        first_new_id=first_new_id,
    )


def inject_gaussian_outliers(dataset: Dataset, count: int, seed=0) -> Dataset:
    """Append pure-noise samples: N(0.5, 1) per feature clipped to [0, 1], random labels."""
    if not dataset.image_mode:
        raise DataError("Outlier injection needs an image-mode dataset (features in [0, 1])")
    if count < 0:
        raise ConfigError(f"Outlier count must be >= 0, got {count}")
    if count == 0:
        return dataset
    rng = _as_seed(seed)
    features = np.clip(rng.normal(OUTLIER_MEAN, OUTLIER_STD, size=(count, dataset.dim)), 0.0, 1.0)
    labels = rng.integers(0, dataset.num_classes, size=count)
    return dataset.append(
        features,
        labels,
        np.ones(count, dtype=bool),
        provenance=f"{dataset.provenance}|outliers={count}",
    )


def split(dataset: Dataset, train_frac: float, val_frac: float, seed=0) -> DatasetSplits:
    """Stratified shuffle-split; outliers always go to train."""
    if not (train_frac > 0.0 and val_frac > 0.0 and train_frac + val_frac < 1.0):
        raise ConfigError(
            f"Split fractions must be positive with sum < 1, got train={train_frac} val={val_frac}"
        )
    rng = _as_seed(seed)
    parts = {"train": [], "val": [], "test": []}
    normal = ~dataset.is_outlier
    for cls in range(dataset.num_classes):
        members = np.flatnonzero((dataset.labels == cls) & normal)
        members = members[rng.permutation(members.size)]
        n_train = int(round(train_frac * members.size))
        n_val = int(round(val_frac * members.size))
        n_test = members.size - n_train - n_val
        if min(n_train, n_val, n_test) < 1:
            raise DataError(
                f"Class {cls} has {members.size} samples, too few to appear in train, val and test"
            )
        parts["train"].append(members[:n_train])
        parts["val"].append(members[n_train : n_train + n_val])
        parts["test"].append(members[n_train + n_val :])
    parts["train"].append(np.flatnonzero(dataset.is_outlier))

    subsets = {
        name: dataset.subset(np.sort(np.concatenate(indices)), provenance=f"{dataset.provenance}|{name}")
        for name, indices in parts.items()
    }
    return DatasetSplits(train=subsets["train"], val=subsets["val"], test=subsets["test"])


def load_source(section: DataSection, seed: int) -> Dataset:
    if section.source == "synthetic":
        return synth_gaussian_clusters(
            section.num_classes,
            section.per_class,
            section.dim,
            section.spread,
            section.label_noise,
            seed=stream(seed, "data"),
        )
    if section.source == "delimited":
        return load_delimited(section.path, section.label_column, section.normalize)
    return Dataset.load_binary(section.path)


def build_splits(section: DataSection, seed: int) -> DatasetSplits:
    """source -> imbalance -> outliers -> stratified split -> oversample train."""
    dataset = load_source(section, seed)
    dataset = make_imbalanced(dataset, section.imbalance_ratio, seed=stream(seed, "imbalance"))

    outliers = section.outlier_count
    if outliers is None:
        expected_train = sum(
            int(round(section.train_frac * count)) for count in dataset.class_counts()
        )
        outliers = int(round(section.outlier_fraction * expected_train))
    if outliers and not dataset.image_mode:
        raise ConfigError("Outlier injection requires normalized (image-mode) features; set outlier_fraction = 0")
    dataset = inject_gaussian_outliers(dataset, outliers, seed=stream(seed, "outliers"))

    splits = split(dataset, section.train_frac, section.val_frac, seed=stream(seed, "split"))
    if section.oversample:
        train = oversample_minority(
            splits.train,
            seed=stream(seed, "oversample"),
            first_new_id=int(dataset.ids.max()) + 1,
        )
        splits = DatasetSplits(train=train, val=splits.val, test=splits.test)

    _logger().info(
        "Built splits. provenance=%s sizes=%s outliers=%s",
        dataset.provenance,
        splits.sizes(),
        int(splits.train.is_outlier.sum()),
    )
    return splits
