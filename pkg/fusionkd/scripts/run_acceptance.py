"""Multi-seed synthetic comparison of TGeo fusion ratios against fixed alpha = 0.5."""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path
from typing import Dict, List

# Allow running this file directly: `python fusionkd/scripts/run_acceptance.py ...`
REPO_ROOT = Path(__file__).resolve().parents[2]
if str(REPO_ROOT) not in sys.path:
    sys.path.append(str(REPO_ROOT))

import pandas as pd

from config import OUTPUT_FOLDER, PRESETS_FOLDER
from fusionkd.logger import get_logger
from fusionkd.models.run_config import RunConfig, load_run_config
from fusionkd.models.training_log import FLOAT_FORMAT
from fusionkd.objects.bilevel import run_distillation, train_teacher
from fusionkd.objects.datasets import build_splits
from fusionkd.objects.errors import FusionKDError
from fusionkd.objects.metrics import accuracy
from fusionkd.objects.network import forward
from fusionkd.objects.tensor_ops import softmax_temp

DEFAULT_SEEDS = 5
REQUIRED_SEED_PASSES = 4


def _seed_count_arg(value: str) -> int:
    try:
        parsed = int(value)
    except ValueError as exc:
        raise argparse.ArgumentTypeError("seeds must be a positive integer.") from exc
    if parsed <= 0:
        raise argparse.ArgumentTypeError("seeds must be > 0.")
    return parsed


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description="Run TGeo and fixed-alpha distillation over several seeds and summarize the trends."
    )
    parser.add_argument("--config", default=f"{PRESETS_FOLDER}synthetic_acceptance.cfg")
    parser.add_argument("--seeds", type=_seed_count_arg, default=DEFAULT_SEEDS)
    parser.add_argument("--out", default=f"{OUTPUT_FOLDER}acceptance")
    return parser


def _test_acc(student, splits) -> float:
    return accuracy(softmax_temp(forward(student, splits.test.features), 1.0), splits.test.labels)


def _less(a: float, b: float) -> bool:
    return not (math.isnan(a) or math.isnan(b)) and a < b


def run_seed(config: RunConfig) -> Dict[str, object]:
    seed = config.run.seed
    splits = build_splits(config.data, seed)
    teacher, _ = train_teacher(config, splits)
    tgeo = run_distillation(config, splits, teacher)
    fixed_config = config.model_copy(
        update={"distill": config.distill.model_copy(update={"policy": "fixed", "alpha0": 0.5})}
    )
    fixed = run_distillation(fixed_config, splits, teacher)

    first = tgeo.log.epochs[0].alpha_stats
    last = tgeo.log.epochs[-1].alpha_stats
    mean = lambda stats, key: float(stats[key][0])  # noqa: E731
    ordering = _less(mean(last, "incorrect_large"), mean(last, "correct_large")) and _less(
        mean(last, "incorrect_small"), mean(last, "correct_large")
    )
    decreasing = _less(mean(last, "incorrect_large"), mean(first, "incorrect_large")) and _less(
        mean(last, "incorrect_small"), mean(first, "incorrect_small")
    )
    return {
        "seed": seed,
        "tgeo_test_acc": _test_acc(tgeo.student, splits),
        "fixed_test_acc": _test_acc(fixed.student, splits),
        "alpha_correct_large": mean(last, "correct_large"),
        "alpha_incorrect_large": mean(last, "incorrect_large"),
        "alpha_incorrect_small": mean(last, "incorrect_small"),
        "alpha_normal": mean(last, "normal"),
        "alpha_outlier": mean(last, "outlier"),
        "ordering_holds": ordering,
        "incorrect_decreasing": decreasing,
        "outlier_below_normal": _less(mean(last, "outlier"), mean(last, "normal")),
        "same_batch_order": tgeo.log.batch_checksums()[: len(fixed.log.epochs)]
        == fixed.log.batch_checksums()[: len(tgeo.log.epochs)],
    }


def main() -> int:
    parser = _build_parser()
    args = parser.parse_args()
    logger = get_logger(name="fusionkd_acceptance")
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    rows: List[Dict[str, object]] = []
    try:
        for seed in range(args.seeds):
            config = load_run_config(
                args.config, {"run.seed": seed, "run.output_dir": str(out_dir / f"seed_{seed}")}
            )
            row = run_seed(config)
            logger.info("Acceptance seed finished. %s", " ".join(f"{key}={value}" for key, value in row.items()))
            rows.append(row)
    except FusionKDError as exc:
        print(f"Acceptance run failed: {exc}", file=sys.stderr)
        return exc.exit_code

    frame = pd.DataFrame(rows)
    frame.to_csv(out_dir / "acceptance_summary.csv", index=False, float_format=FLOAT_FORMAT)
    paired = float((frame["tgeo_test_acc"] - frame["fixed_test_acc"]).mean())
    checks = {
        "tgeo_not_worse": paired >= 0.0,
        "ordering": int(frame["ordering_holds"].sum()) >= min(REQUIRED_SEED_PASSES, args.seeds),
        "incorrect_decreasing": int(frame["incorrect_decreasing"].sum()) >= min(REQUIRED_SEED_PASSES, args.seeds),
        "outliers": int(frame["outlier_below_normal"].sum()) >= min(REQUIRED_SEED_PASSES, args.seeds),
    }
    print(frame.to_string(index=False))
    print(
        "Acceptance summary:"
        f" seeds={args.seeds},"
        f" tgeo_mean={frame['tgeo_test_acc'].mean():.4f},"
        f" fixed_mean={frame['fixed_test_acc'].mean():.4f},"
        f" paired_diff={paired:.4f}"
    )
    for name, passed in checks.items():
        print(f"{name}: {'PASS' if passed else 'FAIL'}")
    return 0 if all(checks.values()) else 1


if __name__ == "__main__":
    raise SystemExit(main())
