"""Shared fixtures: per-test log file and output directory, small synthetic splits."""

from __future__ import annotations

import numpy as np
import pytest

from fusionkd.models.run_config import build_run_config
from fusionkd.objects.datasets import split, synth_gaussian_clusters
from fusionkd.objects.network import init_params
from fusionkd.objects.seeding import stream


@pytest.fixture(autouse=True)
def _isolated_log(tmp_path, monkeypatch):
    monkeypatch.setenv("LOG_LOCATION", str(tmp_path / "logs" / "fusionkd.log"))


@pytest.fixture
def out_dir(tmp_path):
    target = tmp_path / "run"
    target.mkdir()
    return target


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_splits():
    dataset = synth_gaussian_clusters(3, 30, 4, 0.1, seed=stream(0, "data"))
    return split(dataset, 0.6, 0.2, seed=stream(0, "split"))


@pytest.fixture
def tiny_teacher():
    return init_params([4, 8, 3], stream(0, "teacher_init"))


@pytest.fixture
def tiny_config(out_dir):
    def _build(**distill):
        values = {"epochs": 2, "batch_size": 16, "patience": 0, "alpha_dump_every": 1}
        values.update(distill)
        return build_run_config(
            {
                "run": {"seed": 0, "output_dir": str(out_dir)},
                "student": {"hidden": "6"},
                "distill": values,
            }
        )

    return _build
