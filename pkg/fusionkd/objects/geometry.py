"""Trilateral geometry among student (S), teacher (T) and ground truth (G).

Features are assembled from named C-wide slices so every relation mode is a
layout over the same building blocks:

    e_sg = G - S     e_tg = G - T        e_st = T - S
    e_tbar_g = G - Tbar_c                e_s_tbar = Tbar_c - S

S and T here are temperature-1 probabilities.
"""

from __future__ import annotations

from enum import Enum
from typing import Dict, Tuple

import numpy as np

from fusionkd.models.prediction import ClassAverageTable, GeometryFeature, PredictionTriplet
from fusionkd.objects.errors import ConfigError, DataError
from fusionkd.objects.tensor_ops import one_hot


class RelationMode(str, Enum):
    R1 = "R1"
    R2 = "R2"
    R3 = "R3"
    SG_TG = "SG_TG"
    INTRA = "INTRA"
    NO_ST = "NO_ST"


LAYOUTS: Dict[RelationMode, Tuple[str, ...]] = {
    RelationMode.R1: ("S", "T", "T_bar", "G"),
    RelationMode.R2: ("e_sg", "e_tg", "e_st", "e_tbar_g", "e_s_tbar"),
    RelationMode.R3: ("e_sg", "e_tg", "e_st", "e_tbar_g", "e_s_tbar", "S", "T", "T_bar", "G"),
    RelationMode.SG_TG: ("e_sg", "e_tg", "S", "T", "G"),
    RelationMode.INTRA: ("e_sg", "e_tg", "e_st", "S", "T", "G"),
    RelationMode.NO_ST: ("e_sg", "e_tg", "e_tbar_g", "e_s_tbar", "S", "T", "T_bar", "G"),
}

# d slice / d S for each slice; slices not listed do not depend on S.
_STUDENT_COEFFICIENTS: Dict[str, float] = {"e_sg": -1.0, "e_st": -1.0, "e_s_tbar": -1.0, "S": 1.0}


def as_relation_mode(mode) -> RelationMode:
    try:
        return RelationMode(str(getattr(mode, "value", mode)).upper())
    except ValueError as exc:
        raise ConfigError(f"Unknown relation mode: {mode}") from exc


def feature_dim(mode, num_classes: int) -> int:
    return len(LAYOUTS[as_relation_mode(mode)]) * int(num_classes)


def edge_vectors(triplet: PredictionTriplet) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    s, t, g = triplet.student_probs, triplet.teacher_probs, triplet.ground_truth
    return g - s, g - t, t - s


def build_class_averages(teacher_probs, labels, num_classes: int = 0) -> ClassAverageTable:
    probs = np.asarray(teacher_probs, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if probs.ndim != 2 or labels.shape != (probs.shape[0],):
        raise DataError("teacher_probs must be N x C with N labels")
    num_classes = int(num_classes or probs.shape[1])
    rows = np.empty((num_classes, probs.shape[1]))
    for c in range(num_classes):
        members = labels == c
        if not members.any():
            raise ConfigError(f"Class {c} has no training samples; cannot build its teacher average")
        rows[c] = probs[members].mean(axis=0)
    return ClassAverageTable(rows)


def _slice_values(
    s: np.ndarray, t: np.ndarray, t_bar: np.ndarray, g: np.ndarray
) -> Dict[str, np.ndarray]:
    return {
        "e_sg": g - s,
        "e_tg": g - t,
        "e_st": t - s,
        "e_tbar_g": g - t_bar,
        "e_s_tbar": t_bar - s,
        "S": s,
        "T": t,
        "T_bar": t_bar,
        "G": g,
    }


def build_features(
    student_probs,
    teacher_probs,
    labels,
    table: ClassAverageTable,
    mode=RelationMode.R3,
) -> np.ndarray:
    """Row-wise Delta features for a batch: N x (len(layout) * C)."""
    s = np.asarray(student_probs, dtype=np.float64)
    t = np.asarray(teacher_probs, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if s.shape != t.shape or s.ndim != 2 or s.shape[1] != table.num_classes:
        raise DataError("student/teacher probabilities must be N x C matching the table")
    g = one_hot(labels, table.num_classes)
    values = _slice_values(s, t, table.rows[labels], g)
    return np.concatenate([values[name] for name in LAYOUTS[as_relation_mode(mode)]], axis=1)


def build_feature(
    triplet: PredictionTriplet,
    table: ClassAverageTable,
    mode=RelationMode.R3,
) -> GeometryFeature:
    mode = as_relation_mode(mode)
    delta = build_features(
        triplet.student_probs[None, :],
        triplet.teacher_probs[None, :],
        np.array([triplet.class_index]),
        table,
        mode,
    )[0]
    return GeometryFeature(delta=delta, layout=LAYOUTS[mode], num_classes=triplet.num_classes)


def feature_grad_to_student_probs(mode, grad_features: np.ndarray, num_classes: int) -> np.ndarray:
    """Pull a gradient on Delta back onto S (every slice is affine in S)."""
    layout = LAYOUTS[as_relation_mode(mode)]
    grad_features = np.asarray(grad_features, dtype=np.float64)
    grad_s = np.zeros(grad_features.shape[:-1] + (num_classes,))
    for index, name in enumerate(layout):
        coefficient = _STUDENT_COEFFICIENTS.get(name)
        if coefficient is not None:
            grad_s += coefficient * grad_features[..., index * num_classes : (index + 1) * num_classes]
    return grad_s


def st_discrepancy_rows(student_probs, teacher_probs) -> np.ndarray:
    s = np.asarray(student_probs, dtype=np.float64)
    t = np.asarray(teacher_probs, dtype=np.float64)
    if s.shape != t.shape:
        raise DataError(f"Probability shapes differ: {s.shape} vs {t.shape}")
    return np.linalg.norm(s - t, axis=-1)


def st_discrepancy(student_probs, teacher_probs) -> float:
    """Euclidean distance between student and teacher probability vectors."""
    return float(st_discrepancy_rows(student_probs, teacher_probs))
