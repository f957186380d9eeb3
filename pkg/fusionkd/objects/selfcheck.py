"""Oracle suites behind the ``selfcheck`` command."""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional

import numpy as np
import pandas as pd

from fusionkd.logger import get_logger
from fusionkd.models.dataset import Dataset
from fusionkd.models.prediction import ClassAverageTable, PredictionTriplet
from fusionkd.models.run_config import build_run_config
from fusionkd.objects.bilevel import (
    HypergradMode,
    ScalarBilevelProblem,
    hypergrad_oracle_check,
    run_distillation,
)
from fusionkd.objects.datasets import inject_gaussian_outliers, oversample_minority, split, synth_gaussian_clusters
from fusionkd.objects.fusion import build_fusion_net, combine
from fusionkd.objects.geometry import RelationMode, build_feature, edge_vectors, feature_dim
from fusionkd.objects.metrics import early_stop, macro_auc, nll
from fusionkd.objects.network import grad_check, init_params
from fusionkd.objects.seeding import stream
from fusionkd.objects.tensor_ops import ce_loss, kd_loss, one_hot, softmax_temp

GRAD_TOLERANCE = 1e-5
HYPERGRAD_TOLERANCE = 1e-4
EXACT_TOLERANCE = 1e-8
AUC_TOLERANCE = 1e-12
FEATURE_TOLERANCE = 1e-12
KD_TEMPERATURES = (1.0, 1.5, 4.0)

# No mixed theta/omega coupling: the direct term is the whole hypergradient.
ZERO_COUPLING_PROBLEM = ScalarBilevelProblem(b=0.0)
DOMINANT_COUPLING_PROBLEM = ScalarBilevelProblem(a=4.0, b=2.0, lam=0.01, inner_lr=0.2)
# The cubic term makes the central difference inexact, so its error depends on the radius.
CUBIC_PROBLEM = ScalarBilevelProblem(cubic=1.5)


@dataclass(frozen=True)
class CheckResult:
    suite: str
    name: str
    passed: bool
    value: float
    threshold: Optional[float] = None

    def to_row(self) -> dict:
        return {
            "suite": self.suite,
            "check": self.name,
            "result": "PASS" if self.passed else "FAIL",
            "value": self.value,
            "threshold": "" if self.threshold is None else self.threshold,
        }


def _below(suite: str, name: str, value: float, threshold: float) -> CheckResult:
    return CheckResult(suite, name, bool(value < threshold), float(value), threshold)


def _holds(suite: str, name: str, condition: bool) -> CheckResult:
    return CheckResult(suite, name, bool(condition), 1.0 if condition else 0.0)


def _small_network(rng: np.random.Generator, num_classes: int):
    in_dim = int(rng.integers(2, 6))
    hidden = [int(width) for width in rng.integers(2, 7, size=int(rng.integers(1, 3)))]
    params = init_params([in_dim] + hidden + [num_classes], rng, hidden_activation="sigmoid")
    return params, rng.normal(size=in_dim)


def gradient_suite(rng: np.random.Generator, trials: int = 100) -> List[CheckResult]:
    worst = {"ce": 0.0, "combined": 0.0, "fusion_head": 0.0}
    worst.update({f"kd_tau_{tau:g}": 0.0 for tau in KD_TEMPERATURES})
    for _ in range(trials):
        num_classes = int(rng.integers(2, 6))
        params, x = _small_network(rng, num_classes)
        y = one_hot(int(rng.integers(num_classes)), num_classes)
        teacher_logits = rng.normal(scale=2.0, size=num_classes)

        def ce_fn(out):
            loss = ce_loss(out, y)
            return loss.value, loss.grad_wrt_student_logits

        worst["ce"] = max(worst["ce"], grad_check(params, ce_fn, x))
        for tau in KD_TEMPERATURES:

            def kd_fn(out, tau=tau):
                loss = kd_loss(out, teacher_logits, tau)
                return loss.value, loss.grad_wrt_student_logits

            key = f"kd_tau_{tau:g}"
            worst[key] = max(worst[key], grad_check(params, kd_fn, x))

        alpha = float(rng.uniform())
        tau = float(rng.choice(KD_TEMPERATURES))

        def combined_fn(out):
            fused = combine(alpha, kd_loss(out, teacher_logits, tau), ce_loss(out, y))
            return fused.value, fused.grad_wrt_student_logits

        worst["combined"] = max(worst["combined"], grad_check(params, combined_fn, x))

        width = feature_dim(RelationMode.R3, num_classes)
        head = build_fusion_net(width, 4, 1, rng)
        upstream = rng.normal(size=1)

        def head_fn(out):
            return float(upstream @ out), upstream

        worst["fusion_head"] = max(worst["fusion_head"], grad_check(head, head_fn, rng.uniform(-1, 1, size=width)))

    return [_below("gradient", name, value, GRAD_TOLERANCE) for name, value in worst.items()]


def hypergradient_suite() -> List[CheckResult]:
    coarse = hypergrad_oracle_check(HypergradMode.UNROLLED_FD, CUBIC_PROBLEM, fd_radius=1e-2)
    fine = hypergrad_oracle_check(HypergradMode.UNROLLED_FD, CUBIC_PROBLEM, fd_radius=1e-3)
    dominant = hypergrad_oracle_check(HypergradMode.FIRST_ORDER, DOMINANT_COUPLING_PROBLEM)
    return [
        _below("hypergradient", "unrolled_fd_quadratic", hypergrad_oracle_check(HypergradMode.UNROLLED_FD), HYPERGRAD_TOLERANCE),
        _below(
            "hypergradient",
            "first_order_zero_coupling",
            hypergrad_oracle_check(HypergradMode.FIRST_ORDER, ZERO_COUPLING_PROBLEM),
            EXACT_TOLERANCE,
        ),
        _below("hypergradient", "unrolled_fd_cubic", coarse, HYPERGRAD_TOLERANCE),
        _holds("hypergradient", "fd_error_shrinks_with_radius", fine < coarse),
        CheckResult("hypergradient", "first_order_dominant_coupling", True, dominant),
    ]


def loss_identity_suite(rng: np.random.Generator, trials: int = 20) -> List[CheckResult]:
    exact = True
    for _ in range(trials):
        num_classes = int(rng.integers(2, 8))
        z_s = rng.normal(size=num_classes)
        kd = kd_loss(z_s, rng.normal(size=num_classes), float(rng.choice(KD_TEMPERATURES)))
        gt = ce_loss(z_s, one_hot(int(rng.integers(num_classes)), num_classes))
        low, high = combine(0.0, kd, gt), combine(1.0, kd, gt)
        exact &= low.value == gt.value and np.array_equal(low.grad_wrt_student_logits, gt.grad_wrt_student_logits)
        exact &= high.value == kd.value and np.array_equal(high.grad_wrt_student_logits, kd.grad_wrt_student_logits)
    return [_holds("loss_identity", "combine_endpoints_exact", bool(exact)), frozen_fusion_identity()]


def frozen_fusion_identity(seed: int = 0) -> CheckResult:
    """A TGeo run with omega frozen at zero weights (alpha = 0.5) must match fixed alpha = 0.5."""
    dataset = synth_gaussian_clusters(3, 30, 4, 0.1, seed=stream(seed, "data"))
    splits = split(dataset, 0.6, 0.2, seed=stream(seed, "split"))
    teacher = init_params([4, 8, 3], stream(seed, "teacher_init"))
    common = {"epochs": 2, "batch_size": 16, "alpha0": 0.5, "patience": 0}
    tgeo = build_run_config(
        {"distill": {**common, "policy": "tgeo", "fusion_init": "zeros", "freeze_fusion": True}}
    )
    fixed = build_run_config({"distill": {**common, "policy": "fixed"}})
    first = run_distillation(tgeo, splits, teacher)
    second = run_distillation(fixed, splits, teacher)
    same = np.array_equal(first.student.flat(), second.student.flat()) and (
        first.log.batch_checksums() == second.log.batch_checksums()
    )
    return _holds("loss_identity", "frozen_zero_fusion_matches_fixed_half", bool(same))


def feature_suite(rng: np.random.Generator, samples: int = 1000) -> List[CheckResult]:
    closure = 0.0
    zero_sum = 0.0
    lengths_ok = True
    for num_classes in (2, 3, 10):
        table = ClassAverageTable(softmax_temp(rng.normal(size=(num_classes, num_classes))))
        for _ in range(samples):
            triplet = PredictionTriplet.from_label(
                softmax_temp(rng.normal(size=num_classes)),
                softmax_temp(rng.normal(size=num_classes)),
                int(rng.integers(num_classes)),
            )
            e_sg, e_tg, e_st = edge_vectors(triplet)
            closure = max(closure, float(np.max(np.abs((e_sg - e_tg) - e_st))))
            zero_sum = max(zero_sum, abs(e_sg.sum()), abs(e_tg.sum()), abs(e_st.sum()))
        for mode, width in ((RelationMode.R1, 4), (RelationMode.R2, 5), (RelationMode.R3, 9)):
            lengths_ok &= build_feature(triplet, table, mode).delta.size == width * num_classes
    return [
        _below("features", "triangle_closure", closure, FEATURE_TOLERANCE),
        _below("features", "edges_sum_to_zero", zero_sum, FEATURE_TOLERANCE),
        _holds("features", "relation_lengths_4C_5C_9C", bool(lengths_ok)),
    ]


def pairwise_auc(scores: np.ndarray, positives: np.ndarray) -> float:
    """Concordant-pair ratio with ties counted as one half."""
    pos = scores[positives][:, None]
    neg = scores[~positives][None, :]
    concordant = np.sum(pos > neg) + 0.5 * np.sum(pos == neg)
    return float(concordant / (pos.size * neg.size))


def brute_force_macro_auc(probs: np.ndarray, labels: np.ndarray) -> float:
    values = [
        pairwise_auc(probs[:, c], labels == c)
        for c in range(probs.shape[1])
        if 0 < np.sum(labels == c) < labels.size
    ]
    return float(np.mean(values))


def random_auc_fixture(rng: np.random.Generator):
    num_classes = int(rng.integers(2, 5))
    n = int(rng.integers(num_classes + 2, 201))
    labels = np.concatenate([np.arange(num_classes), rng.integers(0, num_classes, size=n - num_classes)])
    # Rounded scores so ties actually occur.
    probs = np.round(rng.uniform(size=(n, num_classes)), 1)
    return probs, labels


def metric_suite(rng: np.random.Generator, fixtures: int = 50) -> List[CheckResult]:
    worst = 0.0
    for _ in range(fixtures):
        probs, labels = random_auc_fixture(rng)
        worst = max(worst, abs(macro_auc(probs, labels) - brute_force_macro_auc(probs, labels)))
    uniform = np.full((4, 3), 1.0 / 3.0)
    return [
        _below("metrics", "macro_auc_matches_pair_counting", worst, AUC_TOLERANCE),
        _below("metrics", "nll_uniform_is_log_c", abs(nll(uniform, [0, 1, 2, 0]) - np.log(3.0)), 1e-12),
        _holds(
            "metrics",
            "early_stop_rule",
            early_stop([0.5, 0.6, 0.6, 0.6], 2)
            and not early_stop([0.5, 0.6, 0.6], 2)
            and early_stop([0.9] + [0.1] * 10, 10)
            and not early_stop(list(np.linspace(0.1, 0.9, 30)), 10),
        ),
    ]


def data_suite(seed: int = 0) -> List[CheckResult]:
    base = synth_gaussian_clusters(2, 10, 3, 0.1, seed=stream(seed, "data"))
    imbalanced = base.subset(np.concatenate([np.arange(10), np.arange(10, 14)]))
    balanced = oversample_minority(imbalanced, seed=stream(seed, "oversample"))
    preserved = np.array_equal(balanced.features[: imbalanced.n], imbalanced.features) and np.array_equal(
        balanced.labels[: imbalanced.n], imbalanced.labels
    )
    noise_base = Dataset(np.full((1, 16), 0.5), [0], 2, image_mode=True)
    noisy = inject_gaussian_outliers(noise_base, 10_000, seed=stream(seed, "outliers"))
    injected = noisy.features[noisy.is_outlier]
    mean = float(injected.mean())
    return [
        _holds("data", "oversampling_equalizes", bool(np.all(balanced.class_counts() == 10))),
        _holds("data", "oversampling_keeps_originals", bool(preserved)),
        _holds("data", "outliers_within_unit_range", bool(injected.min() >= 0.0 and injected.max() <= 1.0)),
        _holds("data", "outlier_mean_near_half", 0.48 <= mean <= 0.52),
    ]


def run_selfcheck(seed: int = 0) -> List[CheckResult]:
    rng = stream(seed, "selfcheck")
    results: List[CheckResult] = []
    results += gradient_suite(rng)
    results += hypergradient_suite()
    results += loss_identity_suite(rng)
    results += feature_suite(rng)
    results += metric_suite(rng)
    results += data_suite(seed)
    failed = [result.name for result in results if not result.passed]
    get_logger(name="fusionkd_selfcheck").info(
        "Selfcheck finished. checks=%s failed=%s", len(results), ",".join(failed) or "none"
    )
    return results


def results_frame(results: List[CheckResult]) -> pd.DataFrame:
    return pd.DataFrame([result.to_row() for result in results])
