"""Evaluation report value types."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Tuple

import numpy as np
import pandas as pd

from fusionkd.objects.errors import DataError

NUM_GROUPS = 5
SUBSET_NAMES: Dict[bool, str] = {True: "teacher_correct", False: "teacher_incorrect"}


@dataclass(frozen=True)
class MetricReport:
    acc: float
    macro_auc: float
    nll: float
    n: int

    def __post_init__(self) -> None:
        if self.n < 1:
            raise DataError("MetricReport needs at least one sample")
        if not 0.0 <= self.acc <= 1.0:
            raise DataError(f"acc out of range: {self.acc}")
        if not 0.0 <= self.macro_auc <= 1.0:
            raise DataError(f"macro_auc out of range: {self.macro_auc}")
        if not self.nll >= 0.0:
            raise DataError(f"nll must be non-negative: {self.nll}")

    def to_row(self, split: str) -> Dict[str, object]:
        return {"split": split, "acc": self.acc, "macro_auc": self.macro_auc, "nll": self.nll, "n": self.n}


def metric_frame(reports: Dict[str, MetricReport]) -> pd.DataFrame:
    return pd.DataFrame([report.to_row(split) for split, report in reports.items()])


@dataclass(frozen=True)
class DiscrepancyGrouping:
    """Per-sample teacher correctness, ST rank and quintile within its subset.

    ``rank`` is the 0-based position of the sample in its subset sorted by
    ascending ST discrepancy; ``group_index`` cuts that order into five
    near-equal groups. ``boundaries`` holds, per subset, the lowest ST value of
    groups 1-4 (NaN where a group is empty).
    """

    sample_ids: np.ndarray
    teacher_correct: np.ndarray
    st: np.ndarray
    rank: np.ndarray
    group_index: np.ndarray
    boundaries: Dict[bool, Tuple[float, ...]]

    @property
    def n(self) -> int:
        return int(self.sample_ids.size)

    def subset_mask(self, correct: bool) -> np.ndarray:
        return self.teacher_correct == bool(correct)

    def subset_size(self, correct: bool) -> int:
        return int(self.subset_mask(correct).sum())

    def is_empty(self, correct: bool) -> bool:
        return self.subset_size(correct) == 0

    def group_mask(self, correct: bool, group: int) -> np.ndarray:
        return self.subset_mask(correct) & (self.group_index == int(group))

    def group_sizes(self, correct: bool) -> List[int]:
        return [int(self.group_mask(correct, g).sum()) for g in range(NUM_GROUPS)]

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "sample_id": self.sample_ids,
                "teacher_correct": self.teacher_correct.astype(int),
                "st_discrepancy": self.st,
                "rank": self.rank,
                "group": self.group_index,
            }
        )


# Teacher correctness crossed with the top/bottom ST fraction of its subset.
PARTITION_NAMES: Tuple[str, ...] = (
    "incorrect_large",
    "incorrect_small",
    "correct_large",
    "correct_small",
)
