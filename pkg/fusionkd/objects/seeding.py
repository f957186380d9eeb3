"""Named random sub-streams derived from a single run seed."""

from __future__ import annotations

from typing import Dict

import numpy as np

# Stable ids: adding a stream must never renumber the existing ones.
STREAM_IDS: Dict[str, int] = {
    "data": 0,
    "init": 1,
    "batching": 2,
    "outliers": 3,
    "split": 4,
    "oversample": 5,
    "validation": 6,
    "fusion_init": 7,
    "teacher_init": 8,
    "imbalance": 9,
    "selfcheck": 10,
}


def stream(seed: int, name: str) -> np.random.Generator:
    """Return an independent generator for ``name`` under ``seed``."""
    if name not in STREAM_IDS:
        raise KeyError(f"Unknown random stream: {name}")
    return np.random.default_rng([int(seed), STREAM_IDS[name]])
