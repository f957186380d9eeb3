"""Dense tensor helpers and the two distillation losses with exact gradients.

All tensors are float64 numpy arrays. Single-sample functions take 1-D logits;
the ``*_rows`` variants take an ``N x C`` batch and return per-row values and
per-row logit gradients.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Tuple

import numpy as np
from scipy.special import log_softmax, softmax

from fusionkd.objects.errors import ConfigError, DataError, NumericError


@dataclass(frozen=True)
class LossValue:
    value: float
    grad_wrt_student_logits: np.ndarray


def as_tensor(values, *, name: str = "tensor") -> np.ndarray:
    """Coerce to a finite float64 array."""
    array = np.asarray(values, dtype=np.float64)
    if not np.all(np.isfinite(array)):
        raise NumericError(f"{name} contains non-finite values")
    return array


def _check_tau(tau: float) -> float:
    tau = float(tau)
    if not tau > 0.0:
        raise ConfigError(f"Temperature tau must be positive, got {tau}")
    return tau


def softmax_temp(logits, tau: float = 1.0) -> np.ndarray:
    """Temperature softmax over the last axis (max-subtracted by scipy)."""
    tau = _check_tau(tau)
    z = as_tensor(logits, name="logits")
    if z.shape[-1] < 2:
        raise ConfigError("softmax_temp needs at least two classes")
    return softmax(z / tau, axis=-1)


def kd_loss_rows(z_s, z_t, tau: float) -> Tuple[np.ndarray, np.ndarray]:
    """tau^2 * KL(softmax(z_t/tau) || softmax(z_s/tau)) per row, and d/dz_s."""
    tau = _check_tau(tau)
    z_s = as_tensor(z_s, name="student logits")
    z_t = as_tensor(z_t, name="teacher logits")
    if z_s.shape != z_t.shape:
        raise ConfigError(f"Logit shapes differ: {z_s.shape} vs {z_t.shape}")
    log_p_s = log_softmax(z_s / tau, axis=-1)
    log_p_t = log_softmax(z_t / tau, axis=-1)
    p_t = np.exp(log_p_t)
    values = tau * tau * np.sum(p_t * (log_p_t - log_p_s), axis=-1)
    # Rounding can leave tiny negatives when the distributions coincide.
    values = np.maximum(values, 0.0)
    grads = tau * (np.exp(log_p_s) - p_t)
    return values, grads


def kd_loss(z_s, z_t, tau: float) -> LossValue:
    values, grads = kd_loss_rows(np.atleast_1d(z_s), np.atleast_1d(z_t), tau)
    return LossValue(float(values), grads)


def one_hot(labels, num_classes: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= num_classes):
        raise DataError(f"Labels must lie in [0, {num_classes})")
    encoded = np.zeros(labels.shape + (num_classes,), dtype=np.float64)
    np.put_along_axis(encoded, labels[..., None], 1.0, axis=-1)
    return encoded


def class_index(y) -> int:
    """Index of the hot entry of a one-hot vector."""
    y = np.asarray(y, dtype=np.float64)
    if y.ndim != 1 or not (np.all((y == 0.0) | (y == 1.0)) and y.sum() == 1.0):
        raise DataError("Ground truth must be a one-hot vector")
    return int(np.argmax(y))


def ce_loss_rows(z_s, labels) -> Tuple[np.ndarray, np.ndarray]:
    """-log softmax(z_s)[label] per row, and d/dz_s = softmax(z_s) - onehot."""
    z_s = as_tensor(z_s, name="student logits")
    labels = np.asarray(labels, dtype=np.int64)
    if z_s.ndim != 2 or labels.shape != (z_s.shape[0],):
        raise ConfigError("ce_loss_rows expects N x C logits and N labels")
    log_p = log_softmax(z_s, axis=-1)
    values = -np.take_along_axis(log_p, labels[:, None], axis=-1)[:, 0]
    grads = np.exp(log_p) - one_hot(labels, z_s.shape[1])
    return values, grads


def ce_loss(z_s, y) -> LossValue:
    label = class_index(y)
    z_s = as_tensor(z_s, name="student logits")
    if z_s.shape != np.shape(y):
        raise ConfigError(f"Logit shape {z_s.shape} does not match label shape {np.shape(y)}")
    values, grads = ce_loss_rows(z_s[None, :], np.array([label]))
    return LossValue(float(values[0]), grads[0])
