"""Job function for the distill command."""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Dict, Optional, Union

from fusionkd.logger import get_logger
from fusionkd.models.model_params import ModelParams
from fusionkd.models.reports import MetricReport, metric_frame
from fusionkd.models.run_config import RunConfig
from fusionkd.models.training_log import FLOAT_FORMAT, TripletDump
from fusionkd.objects.bilevel import DistillResult, run_distillation
from fusionkd.objects.datasets import build_splits
from fusionkd.objects.metrics import metric_report
from fusionkd.objects.network import forward
from fusionkd.objects.tensor_ops import softmax_temp
from fusionkd.workers.command_names import (
    ALPHA_DUMP_FILE,
    CLASS_AVERAGES_FILE,
    DISTILL_COMMAND,
    FUSION_NET_FILE,
    STUDENT_FILE,
    STUDENT_METRICS_FILE,
    TEACHER_FILE,
    TRAINING_LOG_FILE,
    TRIPLET_DUMP_FILE,
    output_dir_for,
    write_resolved_config,
)


def _get_worker_logger() -> logging.Logger:
    return get_logger(name="fusionkd_distill_worker")


def resolve_teacher_file(config: RunConfig, teacher_file: Optional[Union[str, Path]] = None) -> Path:
    return Path(teacher_file or config.distill.teacher_file or output_dir_for(config) / TEACHER_FILE)


def cmd_distill(
    config: RunConfig,
    teacher_file: Optional[Union[str, Path]] = None,
) -> DistillResult:
    """Distill a student from a saved teacher and write params, logs and dumps."""
    logger = _get_worker_logger()
    out_dir = output_dir_for(config)
    write_resolved_config(config, DISTILL_COMMAND)

    teacher_path = resolve_teacher_file(config, teacher_file)
    teacher = ModelParams.load(teacher_path)
    splits = build_splits(config.data, config.run.seed)
    result = run_distillation(config, splits, teacher)

    train_set = splits.train
    student_probs = softmax_temp(forward(result.student, train_set.features), 1.0)
    teacher_probs = softmax_temp(forward(teacher, train_set.features), 1.0)
    TripletDump(
        sample_ids=train_set.ids,
        labels=train_set.labels,
        student_probs=student_probs,
        teacher_probs=teacher_probs,
        is_outlier=train_set.is_outlier,
    ).write(out_dir / TRIPLET_DUMP_FILE)

    reports: Dict[str, MetricReport] = {
        name: metric_report(softmax_temp(forward(result.student, dataset.features), 1.0), dataset.labels)
        for name, dataset in (("train", train_set), ("val", splits.val), ("test", splits.test))
    }
    result.student.save(out_dir / STUDENT_FILE)
    if result.fusion_net is not None:
        result.fusion_net.save(out_dir / FUSION_NET_FILE)
    result.class_averages.save(out_dir / CLASS_AVERAGES_FILE)
    result.log.write_epochs(out_dir / TRAINING_LOG_FILE)
    result.log.write_alpha_dump(out_dir / ALPHA_DUMP_FILE)
    metric_frame(reports).to_csv(out_dir / STUDENT_METRICS_FILE, index=False, float_format=FLOAT_FORMAT)

    logger.info(
        "Distillation written. out_dir=%s teacher=%s policy=%s epochs_run=%s best_epoch=%s test_acc=%.4f",
        out_dir,
        teacher_path,
        config.distill.policy,
        len(result.log.epochs),
        result.log.best_epoch,
        reports["test"].acc,
    )
    return result
