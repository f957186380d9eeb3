"""Shared command names and run-file locations for the workers."""

from __future__ import annotations

from pathlib import Path

from config import OUTPUT_FOLDER
from fusionkd.models.run_config import RunConfig, render_config

TRAIN_TEACHER_COMMAND = "train-teacher"
DISTILL_COMMAND = "distill"
ANALYZE_COMMAND = "analyze"
SELFCHECK_COMMAND = "selfcheck"

COMMANDS = (TRAIN_TEACHER_COMMAND, DISTILL_COMMAND, ANALYZE_COMMAND, SELFCHECK_COMMAND)

TEACHER_FILE = "teacher.tgkd"
TEACHER_METRICS_FILE = "teacher_metrics.csv"
TEACHER_LOG_FILE = "teacher_log.csv"
STUDENT_FILE = "student.tgkd"
FUSION_NET_FILE = "fusion_net.tgkd"
CLASS_AVERAGES_FILE = "class_averages.csv"
TRAINING_LOG_FILE = "training_log.csv"
ALPHA_DUMP_FILE = "alpha_dump.csv"
TRIPLET_DUMP_FILE = "triplet_dump.csv"
STUDENT_METRICS_FILE = "student_metrics.csv"


def output_dir_for(config: RunConfig) -> Path:
    """``run.output_dir`` or ``<OUTPUT_FOLDER>/seed_<seed>``; created on demand."""
    target = Path(config.run.output_dir or f"{OUTPUT_FOLDER}seed_{config.run.seed}")
    target.mkdir(parents=True, exist_ok=True)
    return target


def write_resolved_config(config: RunConfig, command: str) -> Path:
    target = output_dir_for(config) / f"resolved_{command.replace('-', '_')}.cfg"
    target.write_text(render_config(config))
    return target
