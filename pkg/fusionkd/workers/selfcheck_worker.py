"""Job function for the selfcheck command."""

from __future__ import annotations

import logging
from typing import List

from fusionkd.logger import get_logger
from fusionkd.models.run_config import RunConfig
from fusionkd.objects.selfcheck import CheckResult, results_frame, run_selfcheck


def _get_worker_logger() -> logging.Logger:
    return get_logger(name="fusionkd_selfcheck_worker")


def cmd_selfcheck(config: RunConfig) -> List[CheckResult]:
    """Run every oracle suite and print a pass/fail table."""
    results = run_selfcheck(config.run.seed)
    print(results_frame(results).to_string(index=False))
    failed = [result for result in results if not result.passed]
    for result in failed:
        _get_worker_logger().error(
            "Selfcheck failed. suite=%s check=%s value=%s threshold=%s",
            result.suite,
            result.name,
            result.value,
            result.threshold,
        )
    return results
