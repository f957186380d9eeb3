"""Classification metrics and the early-stopping rule."""

from __future__ import annotations

from typing import Sequence, Tuple

import numpy as np
from scipy.stats import rankdata

from fusionkd.logger import get_logger
from fusionkd.models.reports import MetricReport
from fusionkd.objects.errors import ConfigError, DataError

NLL_FLOOR = 1e-12


def _check_inputs(probs, labels) -> Tuple[np.ndarray, np.ndarray]:
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if probs.ndim != 2:
        raise DataError(f"Expected an N x C probability matrix, got shape {probs.shape}")
    if labels.shape != (probs.shape[0],):
        raise DataError(f"Length mismatch: {probs.shape[0]} rows vs {labels.size} labels")
    if probs.shape[0] == 0:
        raise DataError("Metrics need at least one sample")
    if labels.min() < 0 or labels.max() >= probs.shape[1]:
        raise DataError(f"Labels must lie in [0, {probs.shape[1]})")
    return probs, labels


def accuracy(probs, labels) -> float:
    probs, labels = _check_inputs(probs, labels)
    # argmax returns the first maximal index on ties.
    return float(np.mean(np.argmax(probs, axis=1) == labels))


def binary_auc(scores: np.ndarray, positives: np.ndarray) -> float:
    """Mann-Whitney AUC with midranks for ties."""
    ranks = rankdata(scores, method="average")
    n_pos = int(positives.sum())
    n_neg = positives.size - n_pos
    u_stat = ranks[positives].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u_stat / (n_pos * n_neg))


def macro_auc(probs, labels) -> float:
    """Unweighted one-vs-rest AUC; classes lacking positives or negatives are skipped."""
    probs, labels = _check_inputs(probs, labels)
    values = []
    for cls in range(probs.shape[1]):
        positives = labels == cls
        if positives.all() or not positives.any():
            get_logger(name="fusionkd_metrics").warning(
                "Skipping class in macro AUC. class=%s positives=%s n=%s",
                cls,
                int(positives.sum()),
                labels.size,
            )
            continue
        values.append(binary_auc(probs[:, cls], positives))
    if not values:
        raise DataError("macro AUC undefined: every class lacks positives or negatives")
    return float(np.mean(values))


def nll(probs, labels) -> float:
    probs, labels = _check_inputs(probs, labels)
    true_probs = np.take_along_axis(probs, labels[:, None], axis=1)[:, 0]
    return float(np.mean(-np.log(np.maximum(true_probs, NLL_FLOOR))))


def metric_report(probs, labels) -> MetricReport:
    probs, labels = _check_inputs(probs, labels)
    return MetricReport(
        acc=accuracy(probs, labels),
        macro_auc=macro_auc(probs, labels),
        nll=nll(probs, labels),
        n=int(labels.size),
    )


def early_stop(history: Sequence[float], patience: int) -> bool:
    """True once ``patience`` evaluations have passed since the first best value."""
    if patience < 1:
        raise ConfigError(f"patience must be >= 1, got {patience}")
    if not history:
        return False
    best_index = int(np.argmax(np.asarray(history, dtype=np.float64)))
    return len(history) - 1 - best_index >= patience
