"""Job function for the train-teacher command."""

from __future__ import annotations

import logging
from typing import Dict

import numpy as np

from fusionkd.logger import get_logger
from fusionkd.models.reports import MetricReport, metric_frame
from fusionkd.models.run_config import RunConfig
from fusionkd.models.training_log import FLOAT_FORMAT
from fusionkd.objects.bilevel import train_teacher
from fusionkd.objects.datasets import build_splits
from fusionkd.objects.metrics import metric_report
from fusionkd.objects.network import forward
from fusionkd.objects.tensor_ops import softmax_temp
from fusionkd.workers.command_names import (
    TEACHER_FILE,
    TEACHER_LOG_FILE,
    TEACHER_METRICS_FILE,
    TRAIN_TEACHER_COMMAND,
    output_dir_for,
    write_resolved_config,
)


def _get_worker_logger() -> logging.Logger:
    return get_logger(name="fusionkd_teacher_worker")


def cmd_train_teacher(config: RunConfig) -> Dict[str, MetricReport]:
    """Fit the teacher on CE, then write its params file, log and metrics."""
    logger = _get_worker_logger()
    out_dir = output_dir_for(config)
    write_resolved_config(config, TRAIN_TEACHER_COMMAND)

    splits = build_splits(config.data, config.run.seed)
    teacher, log = train_teacher(config, splits)

    clean_train = splits.train.subset(np.flatnonzero(~splits.train.is_outlier))
    reports = {
        name: metric_report(softmax_temp(forward(teacher, dataset.features), 1.0), dataset.labels)
        for name, dataset in (("train", clean_train), ("val", splits.val), ("test", splits.test))
    }

    teacher.save(out_dir / TEACHER_FILE)
    log.write_epochs(out_dir / TEACHER_LOG_FILE)
    metric_frame(reports).to_csv(out_dir / TEACHER_METRICS_FILE, index=False, float_format=FLOAT_FORMAT)
    logger.info(
        "Teacher written. path=%s best_epoch=%s train_acc=%.4f test_acc=%.4f",
        out_dir / TEACHER_FILE,
        log.best_epoch,
        reports["train"].acc,
        reports["test"].acc,
    )
    return reports
