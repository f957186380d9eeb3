"""Bilevel distillation loop.

The student (theta) is trained on the per-sample fused KD/CE loss; the fusion
network (omega) is trained on validation CE through one unrolled student step.
Each batch runs one outer step and then one inner step.
"""

from __future__ import annotations

import hashlib
import math
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, List, Optional, Tuple

import numpy as np

from fusionkd.logger import get_logger
from fusionkd.models.dataset import Dataset, DatasetSplits
from fusionkd.models.model_params import ModelParams
from fusionkd.models.prediction import ClassAverageTable
from fusionkd.models.run_config import DistillSection, RunConfig, TeacherSection
from fusionkd.models.training_log import AlphaSnapshot, EpochRecord, TrainingLog
from fusionkd.objects.analysis import discrepancy_grouping_from_arrays, masked_stats, partition_masks
from fusionkd.objects.errors import ConfigError, DataError, NumericError
from fusionkd.objects.fusion import (
    FixedRatio,
    RatioContext,
    RatioPolicy,
    build_policy,
    combine_rows,
    init_fusion_net,
)
from fusionkd.objects.geometry import (
    RelationMode,
    as_relation_mode,
    build_class_averages,
    build_features,
    feature_dim,
    feature_grad_to_student_probs,
)
from fusionkd.objects.metrics import accuracy, early_stop
from fusionkd.objects.network import backward, forward, init_params
from fusionkd.objects.optimizers import Optimizer, build_optimizer
from fusionkd.objects.seeding import stream
from fusionkd.objects.tensor_ops import ce_loss_rows, kd_loss_rows, softmax_temp

DEFAULT_FD_RADIUS = 0.01


def _logger():
    return get_logger(name="fusionkd_bilevel")


class HypergradMode(str, Enum):
    FIRST_ORDER = "first_order"
    UNROLLED_FD = "unrolled_fd"


def as_hypergrad_mode(mode) -> HypergradMode:
    try:
        return HypergradMode(str(getattr(mode, "value", mode)).lower())
    except ValueError as exc:
        raise ConfigError(f"Unknown hypergradient mode: {mode}") from exc


@dataclass(frozen=True)
class Batch:
    x: np.ndarray
    labels: np.ndarray
    teacher_logits: Optional[np.ndarray] = None
    ids: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        if len(self.labels) == 0:
            raise DataError("Empty batch")

    @property
    def n(self) -> int:
        return int(len(self.labels))

    def take(self, indices: np.ndarray) -> "Batch":
        return Batch(
            x=self.x[indices],
            labels=self.labels[indices],
            teacher_logits=None if self.teacher_logits is None else self.teacher_logits[indices],
            ids=None if self.ids is None else self.ids[indices],
        )

    @classmethod
    def from_dataset(cls, dataset: Dataset, teacher_logits: Optional[np.ndarray] = None) -> "Batch":
        return cls(dataset.features, dataset.labels, teacher_logits, dataset.ids)


@dataclass(frozen=True)
class StepRecord:
    step: int
    train_loss: float
    val_loss: float
    alpha_mean: float


@dataclass
class BilevelState:
    theta: ModelParams
    omega: Optional[ModelParams]
    inner_lr: float
    outer_lr: float
    step: int = 0
    history: List[StepRecord] = field(default_factory=list)

    def __post_init__(self) -> None:
        if not self.inner_lr > 0.0:
            raise ConfigError(f"inner_lr must be positive, got {self.inner_lr}")
        if self.outer_lr < 0.0:
            raise ConfigError(f"outer_lr must be non-negative, got {self.outer_lr}")

    def record(self, entry: StepRecord) -> None:
        self.history.append(entry)


@dataclass(frozen=True)
class FusionObjective:
    """Everything the fused training loss needs besides theta and omega."""

    policy: RatioPolicy
    tau: float = 1.0
    table: Optional[ClassAverageTable] = None
    relation_mode: RelationMode = RelationMode.R3
    stop_gradient: bool = True


@dataclass(frozen=True)
class InnerEvaluation:
    loss: float
    logits: np.ndarray
    alphas: np.ndarray
    kd_values: np.ndarray
    ce_values: np.ndarray
    features: Optional[np.ndarray]
    # d(mean loss)/d(student logits), already divided by the batch size
    grad_logits: np.ndarray


def evaluate_inner(
    objective: FusionObjective,
    theta: ModelParams,
    omega: Optional[ModelParams],
    batch: Batch,
    step: int = 0,
) -> InnerEvaluation:
    logits = forward(theta, batch.x)
    ce_values, ce_grads = ce_loss_rows(logits, batch.labels)
    policy = objective.policy
    if batch.teacher_logits is None:
        if policy.needs_features or policy.needs_ce:
            raise ConfigError(f"Policy {policy.kind.value} needs teacher logits")
        kd_values, kd_grads = np.zeros_like(ce_values), np.zeros_like(ce_grads)
    else:
        kd_values, kd_grads = kd_loss_rows(logits, batch.teacher_logits, objective.tau)

    features = None
    teacher_ce = None
    if policy.needs_features:
        if objective.table is None:
            raise ConfigError("TGeo policy needs the teacher class-average table")
        features = build_features(
            softmax_temp(logits, 1.0),
            softmax_temp(batch.teacher_logits, 1.0),
            batch.labels,
            objective.table,
            objective.relation_mode,
        )
    if policy.needs_ce:
        teacher_ce, _ = ce_loss_rows(batch.teacher_logits, batch.labels)

    context = RatioContext(
        labels=batch.labels,
        step=step,
        features=features,
        student_ce=ce_values,
        teacher_ce=teacher_ce,
    )
    alphas = policy.ratios(context, omega)
    values, grads = combine_rows(alphas, kd_values, kd_grads, ce_values, ce_grads)
    loss = float(np.mean(values))
    if not math.isfinite(loss):
        raise NumericError(f"Non-finite training loss at step {step}")

    grad_logits = grads / batch.n
    if features is not None and not objective.stop_gradient:
        grad_logits = grad_logits + _feature_path_gradient(
            objective, omega, features, logits, (kd_values - ce_values) / batch.n
        )
    return InnerEvaluation(loss, logits, alphas, kd_values, ce_values, features, grad_logits)


def _feature_path_gradient(
    objective: FusionObjective,
    omega: ModelParams,
    features: np.ndarray,
    logits: np.ndarray,
    upstream: np.ndarray,
) -> np.ndarray:
    """d/dz of sum_i upstream_i * alpha_i(Delta_i(z)) through S = softmax(z)."""
    grad_features = objective.policy.feature_gradient(omega, features, upstream)
    grad_s = feature_grad_to_student_probs(objective.relation_mode, grad_features, logits.shape[1])
    s = softmax_temp(logits, 1.0)
    return s * (grad_s - np.sum(grad_s * s, axis=1, keepdims=True))


def train_gradient(
    objective: FusionObjective,
    theta: ModelParams,
    omega: Optional[ModelParams],
    batch: Batch,
    step: int = 0,
) -> Tuple[ModelParams, InnerEvaluation]:
    evaluation = evaluate_inner(objective, theta, omega, batch, step)
    return backward(theta, batch.x, evaluation.grad_logits), evaluation


def inner_omega_gradient(
    objective: FusionObjective,
    theta: ModelParams,
    omega: Optional[ModelParams],
    batch: Batch,
    step: int = 0,
    features: Optional[np.ndarray] = None,
) -> Optional[ModelParams]:
    """d/d omega of the inner loss; zero for policies that ignore omega.

    ``features`` pins Delta instead of recomputing it from ``theta``.
    """
    if omega is None:
        return None
    if not objective.policy.needs_features:
        return omega.zeros_like()
    evaluation = evaluate_inner(objective, theta, omega, batch, step)
    if features is None:
        features = evaluation.features
    return objective.policy.omega_gradient(
        omega, features, (evaluation.kd_values - evaluation.ce_values) / batch.n
    )


def validation_loss(theta: ModelParams, batch: Batch) -> Tuple[float, ModelParams]:
    """Mean ground-truth CE on a validation batch and its theta-gradient."""
    logits = forward(theta, batch.x)
    values, grads = ce_loss_rows(logits, batch.labels)
    return float(np.mean(values)), backward(theta, batch.x, grads / batch.n)


def sgd_step(params: ModelParams, grads: ModelParams, lr: float) -> ModelParams:
    return params.zip_map(grads, lambda p, g: p - lr * g)


def inner_update(
    state: BilevelState,
    batch: Batch,
    objective: FusionObjective,
    optimizer: Optional[Optimizer] = None,
) -> Tuple[ModelParams, InnerEvaluation]:
    grads, evaluation = train_gradient(objective, state.theta, state.omega, batch, state.step)
    if optimizer is None:
        return sgd_step(state.theta, grads, state.inner_lr), evaluation
    return optimizer.step(state.theta, grads), evaluation


def inner_step(
    state: BilevelState,
    batch: Batch,
    objective: FusionObjective,
    optimizer: Optional[Optimizer] = None,
) -> ModelParams:
    """theta after one step on the fused loss; omega is left untouched."""
    theta, _ = inner_update(state, batch, objective, optimizer)
    return theta


def approximate_hypergradient(
    mode,
    *,
    direct: np.ndarray,
    val_grad: np.ndarray,
    theta: np.ndarray,
    omega_grad_at: Callable[[np.ndarray], np.ndarray],
    inner_lr: float,
    fd_radius: float = DEFAULT_FD_RADIUS,
) -> np.ndarray:
    """direct term, plus for unrolled_fd the central-difference mixed term

    -inner_lr * [g(theta + eps v) - g(theta - eps v)] / (2 eps),  eps = fd_radius / |v|

    where g = d L_train / d omega and v = d L_val / d theta at the lookahead point.
    """
    mode = as_hypergrad_mode(mode)
    direct = np.asarray(direct, dtype=np.float64)
    if mode is HypergradMode.FIRST_ORDER:
        return direct
    if not fd_radius > 0.0:
        raise ConfigError(f"fd_radius must be positive, got {fd_radius}")
    val_grad = np.asarray(val_grad, dtype=np.float64)
    norm = float(np.linalg.norm(val_grad))
    if norm == 0.0:
        return direct
    eps = fd_radius / norm
    plus = omega_grad_at(theta + eps * val_grad)
    minus = omega_grad_at(theta - eps * val_grad)
    return direct - inner_lr * (plus - minus) / (2.0 * eps)


def outer_update(
    state: BilevelState,
    train_batch: Batch,
    val_batch: Batch,
    mode,
    objective: FusionObjective,
    fd_radius: float = DEFAULT_FD_RADIUS,
    optimizer: Optional[Optimizer] = None,
) -> Tuple[Optional[ModelParams], float]:
    """(new omega, validation CE at the lookahead student).

    Without an optimizer the step is omega - outer_lr * hypergradient.
    """
    if state.omega is None:
        return None, float("nan")
    grads, evaluation = train_gradient(objective, state.theta, state.omega, train_batch, state.step)
    lookahead = sgd_step(state.theta, grads, state.inner_lr)
    val_loss, val_grad = validation_loss(lookahead, val_batch)
    # stop_gradient: Delta keeps its theta value in the mixed term as in the inner step
    pinned = evaluation.features if objective.stop_gradient else None

    def omega_grad_at(theta_vector: np.ndarray) -> np.ndarray:
        return inner_omega_gradient(
            objective, state.theta.with_flat(theta_vector), state.omega, train_batch, state.step, pinned
        ).flat()

    # Validation CE has no explicit omega term.
    direct = np.zeros(state.omega.size)
    hypergrad = approximate_hypergradient(
        mode,
        direct=direct,
        val_grad=val_grad.flat(),
        theta=state.theta.flat(),
        omega_grad_at=omega_grad_at,
        inner_lr=state.inner_lr,
        fd_radius=fd_radius,
    )
    if not np.all(np.isfinite(hypergrad)):
        raise NumericError(f"Non-finite hypergradient at step {state.step}")
    if optimizer is None:
        return state.omega.with_flat(state.omega.flat() - state.outer_lr * hypergrad), val_loss
    return optimizer.step(state.omega, state.omega.with_flat(hypergrad)), val_loss


def outer_step(
    state: BilevelState,
    train_batch: Batch,
    val_batch: Batch,
    mode,
    objective: FusionObjective,
    fd_radius: float = DEFAULT_FD_RADIUS,
    optimizer: Optional[Optimizer] = None,
) -> Optional[ModelParams]:
    """omega after one hypergradient step; theta is left untouched."""
    omega, _ = outer_update(state, train_batch, val_batch, mode, objective, fd_radius, optimizer)
    return omega


@dataclass(frozen=True)
class ScalarBilevelProblem:
    """One-parameter bilevel toy with a closed-form one-step hypergradient.

    L_train(theta, omega) = a/2 (theta - b omega)^2 + cubic/6 * omega theta^3
    L_val(theta, omega)   = 1/2 (theta - target)^2 + lam/2 omega^2
    """

    a: float = 2.0
    b: float = 0.5
    target: float = 1.0
    lam: float = 0.1
    theta: float = 0.3
    omega: float = 0.7
    inner_lr: float = 0.1
    cubic: float = 0.0

    def train_grad_theta(self, theta: float, omega: float) -> float:
        return self.a * (theta - self.b * omega) + 0.5 * self.cubic * omega * theta**2

    def train_grad_omega(self, theta: float, omega: float) -> float:
        return -self.a * self.b * (theta - self.b * omega) + self.cubic * theta**3 / 6.0

    def lookahead(self) -> float:
        return self.theta - self.inner_lr * self.train_grad_theta(self.theta, self.omega)

    def exact_hypergradient(self) -> float:
        mixed = -self.a * self.b + 0.5 * self.cubic * self.theta**2
        return self.lam * self.omega + (self.lookahead() - self.target) * (-self.inner_lr * mixed)

    def approximate(self, mode, fd_radius: float = DEFAULT_FD_RADIUS) -> float:
        estimate = approximate_hypergradient(
            mode,
            direct=np.array([self.lam * self.omega]),
            val_grad=np.array([self.lookahead() - self.target]),
            theta=np.array([self.theta]),
            omega_grad_at=lambda theta: np.array([self.train_grad_omega(float(theta[0]), self.omega)]),
            inner_lr=self.inner_lr,
            fd_radius=fd_radius,
        )
        return float(estimate[0])


def hypergrad_oracle_check(
    mode,
    problem: Optional[ScalarBilevelProblem] = None,
    fd_radius: float = DEFAULT_FD_RADIUS,
) -> float:
    """|approx - exact| / max(1, |exact|) on a scalar problem."""
    problem = problem or ScalarBilevelProblem()
    exact = problem.exact_hypergradient()
    return abs(problem.approximate(mode, fd_radius) - exact) / max(1.0, abs(exact))


@dataclass(frozen=True)
class TrainSettings:
    epochs: int
    batch_size: int
    inner_lr: float
    outer_lr: float = 0.0
    outer_optimizer: str = "sgd"
    optimizer: str = "sgd"
    momentum: float = 0.0
    weight_decay: float = 0.0
    hypergrad_mode: str = HypergradMode.UNROLLED_FD.value
    fd_radius: float = DEFAULT_FD_RADIUS
    patience: int = 0
    # 0 disables the per-sample alpha dump
    alpha_dump_every: int = 0
    freeze_fusion: bool = False
    seed: int = 0

    @classmethod
    def from_distill(cls, section: DistillSection, seed: int) -> "TrainSettings":
        return cls(
            epochs=section.epochs,
            batch_size=section.batch_size,
            inner_lr=section.inner_lr,
            outer_lr=section.outer_lr,
            outer_optimizer=section.outer_optimizer,
            optimizer=section.optimizer,
            momentum=section.momentum,
            weight_decay=section.weight_decay,
            hypergrad_mode=section.hypergrad_mode,
            fd_radius=section.fd_radius,
            patience=section.patience,
            alpha_dump_every=section.alpha_dump_every,
            freeze_fusion=section.freeze_fusion,
            seed=seed,
        )

    @classmethod
    def from_teacher(cls, section: TeacherSection, seed: int) -> "TrainSettings":
        return cls(
            epochs=section.epochs,
            batch_size=section.batch_size,
            inner_lr=section.lr,
            optimizer=section.optimizer,
            momentum=section.momentum,
            weight_decay=section.weight_decay,
            patience=section.patience,
            seed=seed,
        )

    def is_dump_epoch(self, epoch: int) -> bool:
        if not self.alpha_dump_every:
            return False
        return epoch == 1 or epoch % self.alpha_dump_every == 0 or epoch == self.epochs


def batch_checksum(ids: np.ndarray) -> str:
    """Short digest of the sample order seen in one epoch."""
    return hashlib.sha256(np.asarray(ids, dtype="<i8").tobytes()).hexdigest()[:16]


def _alpha_snapshot(
    objective: FusionObjective,
    state: BilevelState,
    train: Batch,
    is_outlier: np.ndarray,
    epoch: int,
) -> Tuple[AlphaSnapshot, dict]:
    evaluation = evaluate_inner(objective, state.theta, state.omega, train, state.step)
    grouping = discrepancy_grouping_from_arrays(
        softmax_temp(evaluation.logits, 1.0),
        softmax_temp(train.teacher_logits, 1.0),
        train.labels,
        train.ids,
    )
    alphas = np.asarray(evaluation.alphas, dtype=np.float64)
    masks = {"all": np.ones(train.n, dtype=bool), "normal": ~is_outlier, "outlier": is_outlier}
    masks.update(partition_masks(grouping))
    stats = {key: masked_stats(alphas, mask) for key, mask in masks.items()}
    snapshot = AlphaSnapshot(
        epoch=epoch,
        sample_ids=train.ids,
        alphas=alphas,
        teacher_correct=grouping.teacher_correct,
        st=grouping.st,
        is_outlier=is_outlier,
    )
    return snapshot, stats


def run_epochs(
    state: BilevelState,
    objective: FusionObjective,
    train: Batch,
    val: Batch,
    settings: TrainSettings,
    is_outlier: Optional[np.ndarray] = None,
) -> Tuple[ModelParams, TrainingLog]:
    """Shared epoch loop; returns the best-validation-ACC theta and the log."""
    logger = _logger()
    log = TrainingLog()
    best_theta = state.theta
    best_acc = -math.inf
    is_outlier = np.zeros(train.n, dtype=bool) if is_outlier is None else np.asarray(is_outlier, dtype=bool)
    order_rng = stream(settings.seed, "batching")
    val_rng = stream(settings.seed, "validation")
    optimizer = build_optimizer(
        settings.optimizer,
        settings.inner_lr,
        momentum=settings.momentum,
        weight_decay=settings.weight_decay,
    )
    run_outer = (
        state.omega is not None and objective.policy.needs_features and not settings.freeze_fusion
    )
    omega_optimizer = build_optimizer(settings.outer_optimizer, settings.outer_lr) if run_outer else None
    with_alphas = train.teacher_logits is not None
    mode = as_hypergrad_mode(settings.hypergrad_mode)
    if run_outer and mode is HypergradMode.FIRST_ORDER:
        logger.warning(
            "Hypergradient mode first_order keeps only the direct validation term, which is zero "
            "for this objective; the fusion network will not move. hypergrad_mode=%s",
            mode.value,
        )

    for epoch in range(1, settings.epochs + 1):
        order = order_rng.permutation(train.n)
        checksum = batch_checksum(train.ids[order])
        losses: List[float] = []
        started = time.perf_counter()
        for start in range(0, train.n, settings.batch_size):
            batch = train.take(order[start : start + settings.batch_size])
            val_loss = float("nan")
            if run_outer:
                picks = val_rng.choice(val.n, size=min(settings.batch_size, val.n), replace=False)
                state.omega, val_loss = outer_update(
                    state, batch, val.take(picks), mode, objective, settings.fd_radius, omega_optimizer
                )
            state.theta, evaluation = inner_update(state, batch, objective, optimizer)
            state.step += 1
            state.record(StepRecord(state.step, evaluation.loss, val_loss, float(np.mean(evaluation.alphas))))
            losses.append(evaluation.loss)
        seconds_per_batch = (time.perf_counter() - started) / max(1, len(losses))

        val_logits = forward(state.theta, val.x)
        val_ce_values, _ = ce_loss_rows(val_logits, val.labels)
        val_acc = accuracy(softmax_temp(val_logits, 1.0), val.labels)
        stats: dict = {}
        snapshot = None
        if with_alphas:
            snapshot, stats = _alpha_snapshot(objective, state, train, is_outlier, epoch)
        log.add_epoch(
            EpochRecord(
                epoch=epoch,
                steps=state.step,
                train_loss=float(np.mean(losses)),
                val_ce=float(np.mean(val_ce_values)),
                val_acc=val_acc,
                batch_checksum=checksum,
                alpha_stats=stats,
            )
        )
        logger.info(
            "Epoch finished. epoch=%s train_loss=%.6f val_ce=%.6f val_acc=%.4f alpha_mean=%.4f "
            "alpha_outlier=%.4f checksum=%s sec_per_batch=%.6f",
            epoch,
            float(np.mean(losses)),
            float(np.mean(val_ce_values)),
            val_acc,
            stats.get("all", (float("nan"),))[0],
            stats.get("outlier", (float("nan"),))[0],
            checksum,
            seconds_per_batch,
        )

        if val_acc > best_acc:
            best_acc = val_acc
            best_theta = state.theta
            log.best_epoch = epoch

        stopping = bool(settings.patience) and early_stop(log.val_acc_history(), settings.patience)
        if snapshot is not None and (settings.is_dump_epoch(epoch) or (stopping and settings.alpha_dump_every)):
            log.add_snapshot(snapshot)
        if stopping:
            log.stopped_early = True
            logger.info("Early stopping. epoch=%s best_epoch=%s best_val_acc=%.4f", epoch, log.best_epoch, best_acc)
            break

    return best_theta, log


@dataclass(frozen=True)
class DistillResult:
    student: ModelParams
    fusion_net: Optional[ModelParams]
    class_averages: ClassAverageTable
    log: TrainingLog


def _check_teacher(teacher: ModelParams, splits: DatasetSplits) -> None:
    if teacher.input_dim != splits.dim:
        raise DataError(f"Teacher expects {teacher.input_dim} features, data has {splits.dim}")
    if teacher.output_dim != splits.num_classes:
        raise DataError(
            f"Teacher predicts {teacher.output_dim} classes, data has {splits.num_classes}"
        )


def run_distillation(config: RunConfig, splits: DatasetSplits, teacher: ModelParams) -> DistillResult:
    _check_teacher(teacher, splits)
    seed = config.run.seed
    section = config.distill
    num_classes = splits.num_classes
    train_set = splits.train

    teacher_logits = forward(teacher, train_set.features)
    teacher_probs = softmax_temp(teacher_logits, 1.0)
    table = build_class_averages(teacher_probs, train_set.labels, num_classes)
    batches_per_epoch = math.ceil(train_set.n / section.batch_size)
    policy = build_policy(
        section,
        total_steps=section.epochs * batches_per_epoch,
        teacher_probs=teacher_probs,
        labels=train_set.labels,
        num_classes=num_classes,
    )
    relation_mode = as_relation_mode(section.relation_mode)
    objective = FusionObjective(policy, section.tau, table, relation_mode, section.stop_gradient)

    theta = init_params(
        [splits.dim] + list(config.student.hidden) + [num_classes],
        stream(seed, "init"),
        hidden_activation=config.student.activation,
    )
    omega = None
    if policy.needs_features:
        omega = init_fusion_net(
            feature_dim(relation_mode, num_classes),
            section.fusion_hidden,
            section.fusion_depth,
            stream(seed, "fusion_init"),
            section.fusion_init,
            section.fusion_arch,
            num_classes,
        )

    _logger().info(
        "Distillation started. policy=%s tau=%s relation_mode=%s hypergrad_mode=%s "
        "outer_optimizer=%s train=%s val=%s",
        policy.describe(),
        section.tau,
        relation_mode.value,
        section.hypergrad_mode,
        section.outer_optimizer,
        train_set.n,
        splits.val.n,
    )
    state = BilevelState(theta, omega, section.inner_lr, section.outer_lr)
    student, log = run_epochs(
        state,
        objective,
        Batch.from_dataset(train_set, teacher_logits),
        Batch.from_dataset(splits.val),
        TrainSettings.from_distill(section, seed),
        is_outlier=train_set.is_outlier,
    )
    return DistillResult(student, state.omega, table, log)


def train(config: RunConfig, splits: DatasetSplits, teacher: ModelParams) -> Tuple[ModelParams, TrainingLog]:
    result = run_distillation(config, splits, teacher)
    return result.student, result.log


def fit_cross_entropy(
    initial: ModelParams,
    train_set: Dataset,
    val_set: Dataset,
    settings: TrainSettings,
) -> Tuple[ModelParams, TrainingLog]:
    """Plain CE training through the same epoch loop (alpha fixed at 0, no teacher)."""
    state = BilevelState(initial, None, settings.inner_lr, 0.0)
    return run_epochs(
        state,
        FusionObjective(FixedRatio(0.0)),
        Batch.from_dataset(train_set),
        Batch.from_dataset(val_set),
        settings,
    )


def train_teacher(config: RunConfig, splits: DatasetSplits) -> Tuple[ModelParams, TrainingLog]:
    """Teacher on the clean part of the training split (injected outliers excluded)."""
    seed = config.run.seed
    clean = splits.train.subset(np.flatnonzero(~splits.train.is_outlier))
    initial = init_params(
        [splits.dim] + list(config.teacher.hidden) + [splits.num_classes],
        stream(seed, "teacher_init"),
    )
    _logger().info(
        "Teacher training started. layers=%s train=%s val=%s",
        initial.layer_sizes(),
        clean.n,
        splits.val.n,
    )
    return fit_cross_entropy(initial, clean, splits.val, TrainSettings.from_teacher(config.teacher, seed))
