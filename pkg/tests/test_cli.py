import pandas as pd
import pytest

from fusionkd.main import main
from fusionkd.models.model_params import ModelParams
from fusionkd.models.run_config import load_run_config

SMALL_RUN = [
    "--data.per_class", "30",
    "--data.dim", "4",
    "--teacher.hidden", "8",
    "--teacher.epochs", "3",
    "--teacher.batch_size", "16",
    "--student.hidden", "6",
    "--distill.epochs", "3",
    "--distill.batch_size", "16",
    "--distill.fusion_hidden", "8",
    "--distill.alpha_dump_every", "2",
]


def _pipeline(out_dir):
    common = SMALL_RUN + ["--run.output_dir", str(out_dir)]
    assert main(["train-teacher"] + common) == 0
    assert main(["distill"] + common) == 0
    assert main(["analyze"] + common) == 0


def test_bad_config_value_exits_1(out_dir, capsys):
    assert main(["distill", "--distill.tau", "-1", "--run.output_dir", str(out_dir)]) == 1
    assert "tau" in capsys.readouterr().err


def test_unknown_flag_exits_1():
    assert main(["distill", "--distill.no_such_key", "1"]) == 1


def test_missing_command_exits_1():
    assert main([]) == 1


def test_missing_config_file_exits_1(tmp_path):
    assert main(["distill", "--config", str(tmp_path / "absent.cfg")]) == 1


def test_unknown_config_section_exits_1(tmp_path):
    path = tmp_path / "bad.cfg"
    path.write_text("[mystery]\nx = 1\n")
    assert main(["selfcheck", "--config", str(path)]) == 1


def test_distill_without_teacher_exits_2(out_dir):
    assert main(["distill", "--run.output_dir", str(out_dir)] + SMALL_RUN) == 2


def test_analyze_without_dumps_exits_2(out_dir):
    assert main(["analyze", "--run.output_dir", str(out_dir)]) == 2


def test_resolved_config_is_printed_and_saved(out_dir, capsys):
    main(["analyze", "--run.output_dir", str(out_dir), "--run.seed", "4"])
    printed = capsys.readouterr().out
    assert "[run]\nseed = 4\n" in printed
    saved = load_run_config(out_dir / "resolved_analyze.cfg")
    assert saved.run.seed == 4


@pytest.mark.slow
def test_pipeline_writes_every_artifact_and_is_reproducible(tmp_path):
    first, second = tmp_path / "first", tmp_path / "second"
    _pipeline(first)
    _pipeline(second)
    for name in (
        "teacher.tgkd",
        "student.tgkd",
        "fusion_net.tgkd",
        "class_averages.csv",
        "training_log.csv",
        "alpha_dump.csv",
        "triplet_dump.csv",
        "student_metrics.csv",
        "teacher_metrics.csv",
        "discrepancy_groups.csv",
        "fusion_ratio_report.csv",
        "outlier_summary.csv",
        "ratio_hist_all.dat",
    ):
        assert (first / name).read_bytes() == (second / name).read_bytes(), name
    report = pd.read_csv(first / "fusion_ratio_report.csv")
    assert report["epoch"].tolist() == [1, 2, 3]
    student = ModelParams.load(first / "student.tgkd")
    assert student.layer_sizes() == [4, 6, 3]
    alpha_dump = pd.read_csv(first / "alpha_dump.csv")
    assert alpha_dump["alpha"].between(0.0, 1.0).all()
    assert alpha_dump["is_outlier"].sum() > 0


@pytest.mark.slow
def test_selfcheck_command_passes(capsys):
    assert main(["selfcheck"]) == 0
    assert "PASS" in capsys.readouterr().out
