"""Knowledge-fusion ratio policies and the convex KD/CE combination.

The annealed, class-wise and WLS policies are reconstructions of published
baselines from their qualitative behaviour only; reports label them as such.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Any, ClassVar, Dict, Optional, Tuple, Union

import numpy as np
from scipy.special import expit

from fusionkd.models.model_params import Layer, ModelParams
from fusionkd.models.prediction import GeometryFeature
from fusionkd.objects.attention import attention_backward, attention_ratios, build_attention_fusion_net
from fusionkd.objects.errors import ConfigError, NumericError
from fusionkd.objects.network import backward, forward, init_params
from fusionkd.objects.tensor_ops import LossValue


class PolicyKind(str, Enum):
    FIXED = "fixed"
    ANNEALED = "annealed"
    CLASS_WISE = "class_wise"
    WLS = "wls"
    TGEO = "tgeo"


@dataclass(frozen=True)
class CombinedLoss:
    value: float
    alpha: float
    kd_part: float
    gt_part: float
    grad_wrt_student_logits: np.ndarray


@dataclass(frozen=True)
class RatioContext:
    """Per-batch inputs a policy may draw on."""

    labels: np.ndarray
    step: int = 0
    features: Optional[np.ndarray] = None
    student_ce: Optional[np.ndarray] = None
    teacher_ce: Optional[np.ndarray] = None


def _check_alpha(alpha: float) -> float:
    alpha = float(alpha)
    if not 0.0 <= alpha <= 1.0:
        raise ConfigError(f"Fusion ratio must lie in [0, 1], got {alpha}")
    return alpha


def tgeo_ratios(omega: ModelParams, features: np.ndarray) -> np.ndarray:
    if omega.layers[-1].activation != "sigmoid" or omega.output_dim != 1:
        raise ConfigError("Fusion network must end in a single sigmoid unit")
    if np.shape(features)[-1] != omega.input_dim:
        raise ConfigError(
            f"Fusion network expects {omega.input_dim} inputs, Delta has {np.shape(features)[-1]}"
        )
    return forward(omega, features)[..., 0]


def tgeo_ratio(omega: ModelParams, delta: Union[GeometryFeature, np.ndarray]) -> float:
    features = delta.delta if isinstance(delta, GeometryFeature) else np.asarray(delta)
    return float(tgeo_ratios(omega, features))


def fusion_net_gradient(omega: ModelParams, features: np.ndarray, upstream: np.ndarray) -> ModelParams:
    """d/d omega of sum_i upstream_i * alpha_i."""
    return backward(omega, features, np.asarray(upstream, dtype=np.float64)[:, None])


def fusion_net_input_gradient(omega: ModelParams, features: np.ndarray, upstream: np.ndarray) -> np.ndarray:
    _, input_grad = backward(
        omega, features, np.asarray(upstream, dtype=np.float64)[:, None], return_input_grad=True
    )
    return input_grad


def build_fusion_net(
    input_dim: int,
    hidden: int,
    depth: int,
    rng: np.random.Generator,
) -> ModelParams:
    """MLP f_omega: ``depth`` affine layers, relu hidden units, sigmoid output."""
    if not 1 <= depth <= 3:
        raise ConfigError(f"Fusion network depth must be 1-3, got {depth}")
    sizes = [input_dim] + [hidden] * (depth - 1) + [1]
    return init_params(sizes, rng, hidden_activation="relu", output_activation="sigmoid")


FUSION_ARCHS = ("mlp", "attention")


def init_fusion_net(
    input_dim: int,
    hidden: int,
    depth: int,
    rng: np.random.Generator,
    init: str = "glorot",
    arch: str = "mlp",
    token_dim: int = 0,
) -> ModelParams:
    """MLP or attention f_omega, then optionally zero all layers or only the sigmoid head.

    ``depth`` applies to the MLP only; ``token_dim`` (the class count) to attention only.
    """
    if arch == "mlp":
        net = build_fusion_net(input_dim, hidden, depth, rng)
    elif arch == "attention":
        net = build_attention_fusion_net(input_dim, token_dim, hidden, rng)
    else:
        raise ConfigError(f"Unknown fusion network architecture: {arch}")
    if init == "glorot":
        return net
    if init == "zeros":
        return net.zeros_like()
    if init == "zero_head":
        head = net.layers[-1]
        zeroed = Layer(np.zeros_like(head.weight), np.zeros_like(head.bias), head.activation)
        return ModelParams(net.layers[:-1] + (zeroed,))
    raise ConfigError(f"Unknown fusion network init: {init}")


def annealed_ratio(step: int, horizon: int) -> float:
    if horizon < 1:
        raise ConfigError(f"Annealing horizon must be >= 1, got {horizon}")
    if step < 0:
        raise ConfigError(f"Annealing step must be >= 0, got {step}")
    return max(0.0, 1.0 - step / horizon)


def class_wise_ratio(teacher_class_accuracy, class_index: int) -> float:
    accuracy = np.asarray(teacher_class_accuracy, dtype=np.float64)
    if not 0 <= int(class_index) < accuracy.size:
        raise ConfigError(f"Class {class_index} is outside [0, {accuracy.size})")
    return float(np.clip(accuracy[int(class_index)], 0.0, 1.0))


def wls_ratio(student_ce: float, teacher_ce: float, gain: float = 1.0) -> float:
    if not gain > 0.0:
        raise ConfigError(f"WLS gain must be positive, got {gain}")
    return float(expit(gain * (float(student_ce) - float(teacher_ce))))


def combine(alpha: float, kd: LossValue, gt: LossValue) -> CombinedLoss:
    alpha = _check_alpha(alpha)
    return CombinedLoss(
        value=alpha * kd.value + (1.0 - alpha) * gt.value,
        alpha=alpha,
        kd_part=kd.value,
        gt_part=gt.value,
        grad_wrt_student_logits=alpha * kd.grad_wrt_student_logits
        + (1.0 - alpha) * gt.grad_wrt_student_logits,
    )


def combine_rows(
    alphas: np.ndarray,
    kd_values: np.ndarray,
    kd_grads: np.ndarray,
    ce_values: np.ndarray,
    ce_grads: np.ndarray,
) -> Tuple[np.ndarray, np.ndarray]:
    alphas = np.asarray(alphas, dtype=np.float64)
    if np.any(alphas < 0.0) or np.any(alphas > 1.0):
        raise ConfigError("Fusion ratios must lie in [0, 1]")
    weights = alphas[:, None]
    values = alphas * kd_values + (1.0 - alphas) * ce_values
    grads = weights * kd_grads + (1.0 - weights) * ce_grads
    return values, grads


def teacher_class_accuracy(teacher_probs, labels, num_classes: int) -> np.ndarray:
    probs = np.asarray(teacher_probs, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    correct = np.argmax(probs, axis=1) == labels
    accuracy = np.zeros(num_classes)
    for c in range(num_classes):
        members = labels == c
        if members.any():
            accuracy[c] = correct[members].mean()
    return accuracy


class RatioPolicy:
    kind: ClassVar[PolicyKind]
    needs_features: ClassVar[bool] = False
    needs_ce: ClassVar[bool] = False
    reconstruction: ClassVar[bool] = False

    def ratios(self, context: RatioContext, omega: Optional[ModelParams] = None) -> np.ndarray:
        raise NotImplementedError

    def describe(self) -> Dict[str, Any]:
        return {"policy": self.kind.value, "reconstruction": self.reconstruction}


class FixedRatio(RatioPolicy):
    kind = PolicyKind.FIXED

    def __init__(self, alpha0: float) -> None:
        self.alpha0 = _check_alpha(alpha0)

    def ratios(self, context: RatioContext, omega: Optional[ModelParams] = None) -> np.ndarray:
        return np.full(len(context.labels), self.alpha0)

    def describe(self) -> Dict[str, Any]:
        return {**super().describe(), "alpha0": self.alpha0}


class AnnealedRatio(RatioPolicy):
    kind = PolicyKind.ANNEALED
    reconstruction = True

    def __init__(self, horizon: int) -> None:
        if horizon < 1:
            raise ConfigError(f"Annealing horizon must be >= 1, got {horizon}")
        self.horizon = int(horizon)

    def ratios(self, context: RatioContext, omega: Optional[ModelParams] = None) -> np.ndarray:
        return np.full(len(context.labels), annealed_ratio(context.step, self.horizon))

    def describe(self) -> Dict[str, Any]:
        return {**super().describe(), "horizon": self.horizon}


class ClassWiseRatio(RatioPolicy):
    kind = PolicyKind.CLASS_WISE
    reconstruction = True

    def __init__(self, teacher_class_accuracy) -> None:
        self.table = np.clip(np.asarray(teacher_class_accuracy, dtype=np.float64), 0.0, 1.0)

    def ratios(self, context: RatioContext, omega: Optional[ModelParams] = None) -> np.ndarray:
        labels = np.asarray(context.labels, dtype=np.int64)
        if labels.size and (labels.min() < 0 or labels.max() >= self.table.size):
            raise ConfigError("Class index outside the teacher accuracy table")
        return self.table[labels]

    def describe(self) -> Dict[str, Any]:
        return {**super().describe(), "class_accuracy": self.table.tolist()}


class WlsRatio(RatioPolicy):
    kind = PolicyKind.WLS
    needs_ce = True
    reconstruction = True

    def __init__(self, gain: float = 1.0) -> None:
        if not gain > 0.0:
            raise ConfigError(f"WLS gain must be positive, got {gain}")
        self.gain = float(gain)

    def ratios(self, context: RatioContext, omega: Optional[ModelParams] = None) -> np.ndarray:
        if context.student_ce is None or context.teacher_ce is None:
            raise ConfigError("WLS policy needs per-sample student and teacher CE")
        return expit(self.gain * (context.student_ce - context.teacher_ce))

    def describe(self) -> Dict[str, Any]:
        return {**super().describe(), "gain": self.gain}


class TGeoRatio(RatioPolicy):
    """alpha_i = f_omega(Delta_i); omega is owned by the bilevel state."""

    kind = PolicyKind.TGEO
    needs_features = True

    def __init__(self, relation_mode: str = "R3", arch: str = "mlp", token_dim: int = 0) -> None:
        if arch not in FUSION_ARCHS:
            raise ConfigError(f"Unknown fusion network architecture: {arch}")
        if arch == "attention" and token_dim < 1:
            raise ConfigError("Attention fusion network needs the token width (class count)")
        self.relation_mode = relation_mode
        self.arch = arch
        self.token_dim = int(token_dim)

    def forward(self, omega: ModelParams, features: np.ndarray) -> np.ndarray:
        if self.arch == "attention":
            return attention_ratios(omega, features, self.token_dim)
        return tgeo_ratios(omega, features)

    def omega_gradient(self, omega: ModelParams, features: np.ndarray, upstream: np.ndarray) -> ModelParams:
        """d/d omega of sum_i upstream_i * alpha_i."""
        if self.arch == "attention":
            grads, _ = attention_backward(omega, features, upstream, self.token_dim)
            return grads
        return fusion_net_gradient(omega, features, upstream)

    def feature_gradient(self, omega: ModelParams, features: np.ndarray, upstream: np.ndarray) -> np.ndarray:
        """d/d Delta of sum_i upstream_i * alpha_i."""
        if self.arch == "attention":
            _, grad_features = attention_backward(omega, features, upstream, self.token_dim)
            return grad_features
        return fusion_net_input_gradient(omega, features, upstream)

    def ratios(self, context: RatioContext, omega: Optional[ModelParams] = None) -> np.ndarray:
        if omega is None or context.features is None:
            raise ConfigError("TGeo policy needs the fusion network and Delta features")
        alphas = self.forward(omega, context.features)
        if not np.all(np.isfinite(alphas)):
            raise NumericError("Fusion network produced non-finite ratios")
        return alphas

    def describe(self) -> Dict[str, Any]:
        return {**super().describe(), "relation_mode": str(self.relation_mode), "fusion_arch": self.arch}


def fixed_ratio(alpha0: float) -> FixedRatio:
    return FixedRatio(alpha0)


def build_policy(
    section,
    *,
    total_steps: int = 1,
    teacher_probs: Optional[np.ndarray] = None,
    labels: Optional[np.ndarray] = None,
    num_classes: int = 0,
) -> RatioPolicy:
    """Policy for a ``[distill]`` config section."""
    kind = PolicyKind(section.policy)
    if kind is PolicyKind.FIXED:
        return fixed_ratio(section.alpha0)
    if kind is PolicyKind.ANNEALED:
        return AnnealedRatio(max(1, int(total_steps)))
    if kind is PolicyKind.CLASS_WISE:
        if teacher_probs is None or labels is None:
            raise ConfigError("Class-wise policy needs teacher predictions on the training set")
        return ClassWiseRatio(teacher_class_accuracy(teacher_probs, labels, num_classes))
    if kind is PolicyKind.WLS:
        return WlsRatio(section.wls_gain)
    return TGeoRatio(section.relation_mode, section.fusion_arch, num_classes)
