from pathlib import Path

import pytest

from fusionkd.models.run_config import (
    DataSection,
    RunConfig,
    build_run_config,
    config_flags,
    load_run_config,
    parse_config_text,
    render_config,
)
from fusionkd.objects.errors import ConfigError

PRESETS = sorted((Path(__file__).resolve().parents[1] / "presets").glob("*.cfg"))

SAMPLE = """
# comment line
[run]
seed = 7

[distill]
policy = fixed
alpha0 = 0.2
teacher_file = "runs/teacher file.tgkd"

[teacher]
hidden = 32, 16
"""


def test_parse_config_text_sections_and_values():
    raw = parse_config_text(SAMPLE)
    assert raw["run"] == {"seed": "7"}
    assert raw["distill"]["teacher_file"] == "runs/teacher file.tgkd"
    config = build_run_config(raw)
    assert config.run.seed == 7
    assert config.distill.policy == "fixed"
    assert config.distill.alpha0 == 0.2
    assert config.teacher.hidden == [32, 16]
    assert config.distill.tau == 4.0


@pytest.mark.parametrize(
    "text",
    [
        "[nonsense]\nx = 1\n",
        "seed = 1\n[run]\n",
        "[run]\nseed\n",
    ],
)
def test_parse_config_text_rejects_structure_errors(text):
    with pytest.raises(ConfigError):
        parse_config_text(text)


@pytest.mark.parametrize(
    "raw",
    [
        {"distill": {"unknown_knob": "1"}},
        {"distill": {"tau": "0"}},
        {"distill": {"alpha0": "1.5"}},
        {"distill": {"policy": "magic"}},
        {"distill": {"inner_lr": "0"}},
        {"distill": {"fusion_depth": "4"}},
        {"distill": {"fusion_arch": "transformer"}},
        {"distill": {"outer_optimizer": "rmsprop"}},
        {"data": {"train_frac": "0.7", "val_frac": "0.3"}},
        {"data": {"source": "delimited"}},
        {"teacher": {"hidden": "8,0"}},
        {"run": {"seed": "-1"}},
    ],
)
def test_invalid_values_are_config_errors(raw):
    with pytest.raises(ConfigError):
        build_run_config(raw)


def test_overrides_win_over_file(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text(SAMPLE)
    config = load_run_config(path, {"run.seed": "9", "distill.tau": "1.5"})
    assert config.run.seed == 9
    assert config.distill.tau == 1.5
    assert config.distill.alpha0 == 0.2
    with pytest.raises(ConfigError):
        load_run_config(path, {"nowhere.tau": "1"})


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError):
        load_run_config(tmp_path / "absent.cfg")


def test_defaults_without_a_file():
    config = load_run_config()
    assert config == RunConfig()
    assert config.distill.patience == 10
    assert config.distill.hypergrad_mode == "unrolled_fd"
    assert config.distill.outer_optimizer == "adam"
    assert config.data.outlier_count is None


def test_default_split_is_80_10_10():
    data = build_run_config({}).data
    assert (data.train_frac, data.val_frac) == (0.8, 0.1)
    assert DataSection().train_frac == 0.8


def test_render_round_trip_reproduces_the_config():
    config = build_run_config(
        parse_config_text(SAMPLE),
        {"data.outlier_count": "5", "analyze.epochs": "1,10", "distill.stop_gradient": "false"},
    )
    assert build_run_config(parse_config_text(render_config(config))) == config


def test_blank_outlier_count_means_derived():
    assert DataSection(outlier_count="").outlier_count is None


def test_config_flags_cover_every_key():
    flags = config_flags()
    assert "distill.tau" in flags
    assert "data.outlier_fraction" in flags
    assert "analyze.bins" in flags
    assert len(flags) == len(set(flags))


@pytest.mark.parametrize("preset", PRESETS, ids=lambda path: path.stem)
def test_presets_load(preset):
    config = load_run_config(preset)
    assert config.distill.outer_lr <= config.distill.inner_lr


def test_acceptance_preset_values():
    config = load_run_config(Path(__file__).resolve().parents[1] / "presets" / "synthetic_acceptance.cfg")
    assert config.data.num_classes == 3 and config.data.per_class == 300 and config.data.dim == 16
    assert config.teacher.hidden == [64, 64]
    assert config.student.hidden == [16]
    assert config.distill.tau == 4.0 and config.distill.relation_mode == "R3"
    assert config.distill.outer_optimizer == "adam" and config.distill.fusion_init == "zero_head"
    assert config.distill.patience == 0
