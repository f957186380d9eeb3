"""Discrepancy grouping, fusion-ratio reports and ratio histograms."""

from __future__ import annotations

from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from fusionkd.logger import get_logger
from fusionkd.models.prediction import PredictionTriplet
from fusionkd.models.reports import NUM_GROUPS, PARTITION_NAMES, SUBSET_NAMES, DiscrepancyGrouping
from fusionkd.objects.errors import DataError
from fusionkd.objects.geometry import st_discrepancy_rows

EXTREME_FRACTION = 0.2
HISTOGRAM_BINS = 20
EPOCH_GROUPING_COLUMNS = ("teacher_correct", "st_discrepancy")


def _logger():
    return get_logger(name="fusionkd_analysis")


def discrepancy_grouping_from_arrays(
    student_probs,
    teacher_probs,
    labels,
    sample_ids=None,
) -> DiscrepancyGrouping:
    s = np.asarray(student_probs, dtype=np.float64)
    t = np.asarray(teacher_probs, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if s.ndim != 2 or s.shape[0] == 0:
        raise DataError("Discrepancy grouping needs at least one sample")
    if labels.shape != (s.shape[0],):
        raise DataError("Discrepancy grouping needs one label per sample")
    correct = np.argmax(t, axis=1) == labels
    return grouping_from_columns(correct, st_discrepancy_rows(s, t), sample_ids)


def grouping_from_columns(teacher_correct, st, sample_ids=None) -> DiscrepancyGrouping:
    """Grouping from already computed teacher correctness and ST discrepancy, in the given order."""
    correct = np.asarray(teacher_correct, dtype=bool)
    st = np.asarray(st, dtype=np.float64)
    n = correct.size
    if n == 0 or st.shape != (n,):
        raise DataError("Discrepancy grouping needs one ST value per sample")
    ids = np.arange(n, dtype=np.int64) if sample_ids is None else np.asarray(sample_ids, dtype=np.int64)
    rank = np.zeros(n, dtype=np.int64)
    group = np.zeros(n, dtype=np.int64)
    boundaries: Dict[bool, Tuple[float, ...]] = {}
    for flag in (True, False):
        members = np.flatnonzero(correct == flag)
        if members.size == 0:
            _logger().warning("Discrepancy subset is empty. subset=%s", SUBSET_NAMES[flag])
        elif members.size < NUM_GROUPS:
            _logger().warning(
                "Discrepancy subset too small for five groups. subset=%s size=%s",
                SUBSET_NAMES[flag],
                members.size,
            )
        order = members[np.argsort(st[members], kind="stable")]
        rank[order] = np.arange(order.size)
        chunks = np.array_split(order, NUM_GROUPS)
        for index, chunk in enumerate(chunks):
            group[chunk] = index
        boundaries[flag] = tuple(float(st[chunk[0]]) if chunk.size else float("nan") for chunk in chunks[1:])

    return DiscrepancyGrouping(
        sample_ids=ids,
        teacher_correct=correct,
        st=st,
        rank=rank,
        group_index=group,
        boundaries=boundaries,
    )


def discrepancy_grouping(
    triplets: Sequence[PredictionTriplet],
    sample_ids=None,
) -> DiscrepancyGrouping:
    if not triplets:
        raise DataError("Discrepancy grouping needs at least one triplet")
    return discrepancy_grouping_from_arrays(
        np.stack([triplet.student_probs for triplet in triplets]),
        np.stack([triplet.teacher_probs for triplet in triplets]),
        np.array([triplet.class_index for triplet in triplets]),
        sample_ids,
    )


def partition_masks(grouping: DiscrepancyGrouping, fraction: float = EXTREME_FRACTION) -> Dict[str, np.ndarray]:
    """Top/bottom ``fraction`` of each correctness subset by ST (at least one sample each)."""
    masks: Dict[str, np.ndarray] = {}
    for flag, prefix in ((False, "incorrect"), (True, "correct")):
        subset = grouping.subset_mask(flag)
        size = int(subset.sum())
        k = max(1, int(round(fraction * size))) if size else 0
        masks[f"{prefix}_large"] = subset & (grouping.rank >= size - k)
        masks[f"{prefix}_small"] = subset & (grouping.rank < k)
    return {name: masks[name] for name in PARTITION_NAMES}


def stable_mean(values) -> float:
    """Mean that is exact for constant inputs and never leaves [min, max]; NaN when empty."""
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        return float("nan")
    low, high = values.min(), values.max()
    return float(np.clip(low + np.mean(values - low), low, high))


def masked_stats(alphas: np.ndarray, mask: np.ndarray) -> Tuple[float, float]:
    selected = alphas[mask]
    if selected.size == 0:
        return float("nan"), float("nan")
    return stable_mean(selected), float(np.std(selected))


def align_by_id(ids, reference_ids: np.ndarray, what: str = "alpha dump") -> np.ndarray:
    """Positions of ``reference_ids`` inside ``ids``; DataError names the first misaligned id."""
    ids = np.asarray(ids, dtype=np.int64)
    reference_ids = np.asarray(reference_ids, dtype=np.int64)
    unique, counts = np.unique(ids, return_counts=True)
    if np.any(counts > 1):
        raise DataError(f"Sample id {int(unique[counts > 1][0])} appears more than once in the {what}")
    mismatch = np.setxor1d(ids, reference_ids)
    if mismatch.size:
        raise DataError(f"Sample ids do not align between {what} and triplet dump; first offending id {int(mismatch[0])}")
    position = {int(sample_id): index for index, sample_id in enumerate(ids)}
    return np.array([position[int(sample_id)] for sample_id in reference_ids], dtype=np.int64)


def alphas_for_epoch(alpha_log: pd.DataFrame, grouping: DiscrepancyGrouping, epoch: int) -> np.ndarray:
    rows = alpha_log[alpha_log["epoch"] == int(epoch)]
    if rows.empty:
        raise DataError(f"Alpha log has no entries for epoch {epoch}")
    order = align_by_id(rows["sample_id"].to_numpy(), grouping.sample_ids, what=f"alpha dump (epoch {epoch})")
    return rows["alpha"].to_numpy(dtype=np.float64)[order]


def fusion_ratio_report(
    alpha_log: pd.DataFrame,
    grouping: DiscrepancyGrouping,
    epochs: Optional[Sequence[int]] = None,
    fraction: float = EXTREME_FRACTION,
) -> pd.DataFrame:
    """Mean alpha per (epoch x partition); empty partitions stay NaN (absent).

    When the log carries per-epoch ``teacher_correct`` and ``st_discrepancy``
    columns, each epoch is partitioned by its own values, so the report matches
    the statistics logged during training. Otherwise ``grouping`` is used.
    """
    if epochs is None or len(epochs) == 0:
        epochs = sorted(int(epoch) for epoch in alpha_log["epoch"].unique())
    per_epoch = all(column in alpha_log.columns for column in EPOCH_GROUPING_COLUMNS)
    rows: List[Dict[str, object]] = []
    shared_masks = partition_masks(grouping, fraction)
    for epoch in epochs:
        alphas = alphas_for_epoch(alpha_log, grouping, epoch)
        masks = shared_masks
        if per_epoch:
            logged = alpha_log[alpha_log["epoch"] == int(epoch)]
            alphas = logged["alpha"].to_numpy(dtype=np.float64)
            masks = partition_masks(
                grouping_from_columns(
                    logged["teacher_correct"].to_numpy(dtype=bool),
                    logged["st_discrepancy"].to_numpy(dtype=np.float64),
                    logged["sample_id"].to_numpy(dtype=np.int64),
                ),
                fraction,
            )
        row: Dict[str, object] = {"epoch": int(epoch)}
        for name in PARTITION_NAMES:
            row[name] = stable_mean(alphas[masks[name]])
        for name in PARTITION_NAMES:
            row[f"n_{name}"] = int(masks[name].sum())
        rows.append(row)
    return pd.DataFrame(rows)


def group_summary(
    grouping: DiscrepancyGrouping,
    student_probs,
    labels,
    alphas: Optional[np.ndarray] = None,
) -> pd.DataFrame:
    """Per (subset, group): size, ST range, student accuracy and mean alpha."""
    student_correct = np.argmax(np.asarray(student_probs), axis=1) == np.asarray(labels)
    rows: List[Dict[str, object]] = []
    for flag in (True, False):
        absent = grouping.is_empty(flag)
        for group in range(NUM_GROUPS):
            mask = grouping.group_mask(flag, group)
            count = int(mask.sum())
            rows.append(
                {
                    "subset": SUBSET_NAMES[flag],
                    "group": group + 1,
                    "absent": int(absent),
                    "count": count,
                    "st_min": float(grouping.st[mask].min()) if count else np.nan,
                    "st_max": float(grouping.st[mask].max()) if count else np.nan,
                    "student_acc": float(student_correct[mask].mean()) if count else np.nan,
                    "alpha_mean": stable_mean(alphas[mask]) if alphas is not None else np.nan,
                }
            )
    return pd.DataFrame(rows)


def incorrect_sample_ratio_summary(alphas: np.ndarray, grouping: DiscrepancyGrouping) -> Dict[str, float]:
    mask = grouping.subset_mask(False)
    mean, std = masked_stats(np.asarray(alphas, dtype=np.float64), mask)
    return {"count": int(mask.sum()), "alpha_mean": mean, "alpha_std": std}


def outlier_summary(alphas, st, is_outlier) -> pd.DataFrame:
    """Mean alpha and ST discrepancy on normal vs injected-outlier samples."""
    alphas = np.asarray(alphas, dtype=np.float64)
    st = np.asarray(st, dtype=np.float64)
    is_outlier = np.asarray(is_outlier, dtype=bool)
    rows = []
    for name, mask in (("normal", ~is_outlier), ("outlier", is_outlier)):
        mean, std = masked_stats(alphas, mask)
        rows.append(
            {
                "samples": name,
                "count": int(mask.sum()),
                "alpha_mean": mean,
                "alpha_std": std,
                "st_mean": stable_mean(st[mask]),
            }
        )
    return pd.DataFrame(rows)


def ratio_histogram(alphas, bins: int = HISTOGRAM_BINS) -> Tuple[np.ndarray, np.ndarray]:
    """(bin centres, density) over [0, 1]; all-zero density for an empty input."""
    alphas = np.asarray(alphas, dtype=np.float64)
    edges = np.linspace(0.0, 1.0, bins + 1)
    centres = 0.5 * (edges[:-1] + edges[1:])
    if alphas.size == 0:
        return centres, np.zeros(bins)
    density, _ = np.histogram(alphas, bins=edges, density=True)
    return centres, density


def write_histogram(path: Union[str, Path], centres: np.ndarray, density: np.ndarray) -> Path:
    """Gnuplot-ready two-column file."""
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    lines = ["# bin_centre density"]
    lines.extend(f"{centre:.17g} {value:.17g}" for centre, value in zip(centres, density))
    target.write_text("\n".join(lines) + "\n")
    return target
