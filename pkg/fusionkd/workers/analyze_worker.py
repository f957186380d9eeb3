"""Job function for the analyze command."""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Dict, Optional, Union

import numpy as np
import pandas as pd

from fusionkd.logger import get_logger
from fusionkd.models.run_config import RunConfig
from fusionkd.models.training_log import FLOAT_FORMAT, TripletDump, read_alpha_dump
from fusionkd.objects.analysis import (
    alphas_for_epoch,
    discrepancy_grouping,
    fusion_ratio_report,
    group_summary,
    incorrect_sample_ratio_summary,
    outlier_summary,
    ratio_histogram,
    write_histogram,
)
from fusionkd.objects.errors import DataError
from fusionkd.workers.command_names import (
    ALPHA_DUMP_FILE,
    ANALYZE_COMMAND,
    TRIPLET_DUMP_FILE,
    output_dir_for,
    write_resolved_config,
)

PathLike = Union[str, Path]


def _get_worker_logger() -> logging.Logger:
    return get_logger(name="fusionkd_analyze_worker")


def _write_csv(frame: pd.DataFrame, path: Path) -> Path:
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, na_rep="")
    return path


def cmd_analyze(
    config: RunConfig,
    alpha_dump: Optional[PathLike] = None,
    triplet_dump: Optional[PathLike] = None,
) -> Dict[str, Path]:
    """Discrepancy groups, per-partition alpha grid and ratio histograms from the run dumps."""
    logger = _get_worker_logger()
    out_dir = output_dir_for(config)
    write_resolved_config(config, ANALYZE_COMMAND)
    alpha_path = Path(alpha_dump or config.analyze.alpha_dump or out_dir / ALPHA_DUMP_FILE)
    triplet_path = Path(triplet_dump or config.analyze.triplet_dump or out_dir / TRIPLET_DUMP_FILE)

    alpha_log = read_alpha_dump(alpha_path)
    if alpha_log.empty:
        raise DataError(f"Alpha dump {alpha_path} has no rows")
    dump = TripletDump.read(triplet_path)
    grouping = discrepancy_grouping(dump.triplets(), dump.sample_ids)

    logged_epochs = sorted(int(epoch) for epoch in alpha_log["epoch"].unique())
    for epoch in logged_epochs:
        alphas_for_epoch(alpha_log, grouping, epoch)
    final_alphas = alphas_for_epoch(alpha_log, grouping, logged_epochs[-1])

    written: Dict[str, Path] = {}
    written["discrepancy_groups"] = _write_csv(
        group_summary(grouping, dump.student_probs, dump.labels, final_alphas),
        out_dir / "discrepancy_groups.csv",
    )
    written["discrepancy_assignment"] = _write_csv(grouping.to_frame(), out_dir / "discrepancy_assignment.csv")
    written["fusion_ratio_report"] = _write_csv(
        fusion_ratio_report(alpha_log, grouping, config.analyze.epochs or logged_epochs),
        out_dir / "fusion_ratio_report.csv",
    )
    written["incorrect_ratio_summary"] = _write_csv(
        pd.DataFrame([incorrect_sample_ratio_summary(final_alphas, grouping)]),
        out_dir / "incorrect_ratio_summary.csv",
    )
    written["outlier_summary"] = _write_csv(
        outlier_summary(final_alphas, grouping.st, dump.is_outlier),
        out_dir / "outlier_summary.csv",
    )
    for name, mask in (
        ("all", np.ones(dump.is_outlier.size, dtype=bool)),
        ("normal", ~dump.is_outlier),
        ("outlier", dump.is_outlier),
    ):
        centres, density = ratio_histogram(final_alphas[mask], config.analyze.bins)
        written[f"ratio_hist_{name}"] = write_histogram(out_dir / f"ratio_hist_{name}.dat", centres, density)

    logger.info(
        "Analysis written. out_dir=%s epochs=%s teacher_incorrect=%s outliers=%s",
        out_dir,
        logged_epochs,
        grouping.subset_size(False),
        int(dump.is_outlier.sum()),
    )
    return written
