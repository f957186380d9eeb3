import math

import numpy as np
import pandas as pd
import pytest

from fusionkd.models.prediction import PredictionTriplet
from fusionkd.models.reports import PARTITION_NAMES
from fusionkd.models.training_log import (
    ALPHA_DUMP_COLUMNS,
    AlphaSnapshot,
    EpochRecord,
    TrainingLog,
    TripletDump,
    read_alpha_dump,
)
from fusionkd.objects.analysis import (
    align_by_id,
    alphas_for_epoch,
    discrepancy_grouping,
    discrepancy_grouping_from_arrays,
    fusion_ratio_report,
    group_summary,
    incorrect_sample_ratio_summary,
    outlier_summary,
    partition_masks,
    ratio_histogram,
    stable_mean,
    write_histogram,
)
from fusionkd.objects.bilevel import run_distillation
from fusionkd.objects.errors import DataError
from fusionkd.objects.network import forward
from fusionkd.objects.tensor_ops import softmax_temp


def _fixture(rng, n=40, num_classes=3):
    labels = rng.integers(0, num_classes, size=n)
    teacher = softmax_temp(rng.normal(scale=2.0, size=(n, num_classes)))
    student = softmax_temp(rng.normal(size=(n, num_classes)))
    return student, teacher, labels


def _alpha_log(ids, epochs_to_alphas):
    frames = [
        pd.DataFrame({"sample_id": ids, "epoch": epoch, "alpha": alphas})
        for epoch, alphas in epochs_to_alphas.items()
    ]
    return pd.concat(frames, ignore_index=True)


def test_grouping_is_quintiles_of_each_subset(rng):
    student, teacher, labels = _fixture(rng, n=53)
    grouping = discrepancy_grouping_from_arrays(student, teacher, labels)
    for flag in (True, False):
        sizes = grouping.group_sizes(flag)
        assert sum(sizes) == grouping.subset_size(flag)
        assert max(sizes) - min(sizes) <= 1
        members = grouping.subset_mask(flag)
        order = np.argsort(grouping.rank[members])
        assert np.all(np.diff(grouping.st[members][order]) >= 0.0)
        groups = grouping.group_index[members][order]
        assert np.all(np.diff(groups) >= 0)


def test_grouping_from_triplets_matches_arrays(rng):
    student, teacher, labels = _fixture(rng)
    triplets = [PredictionTriplet.from_label(s, t, y) for s, t, y in zip(student, teacher, labels)]
    a = discrepancy_grouping(triplets)
    b = discrepancy_grouping_from_arrays(student, teacher, labels)
    assert np.array_equal(a.group_index, b.group_index)
    assert np.array_equal(a.st, b.st)


def test_grouping_with_an_empty_subset_marks_it_absent():
    teacher = np.array([[0.9, 0.1], [0.2, 0.8], [0.7, 0.3]])
    student = np.array([[0.6, 0.4], [0.5, 0.5], [0.1, 0.9]])
    grouping = discrepancy_grouping_from_arrays(student, teacher, [0, 1, 0])
    assert grouping.is_empty(False)
    assert grouping.group_sizes(True) == [1, 1, 1, 0, 0]
    summary = group_summary(grouping, student, [0, 1, 0])
    incorrect = summary[summary["subset"] == "teacher_incorrect"]
    assert (incorrect["absent"] == 1).all() and (incorrect["count"] == 0).all()
    assert incorrect["st_min"].isna().all()
    assert math.isnan(grouping.boundaries[True][-1])


def test_grouping_rejects_empty_input():
    with pytest.raises(DataError):
        discrepancy_grouping([])


def test_partition_masks_take_twenty_percent_by_rank(rng):
    student, teacher, labels = _fixture(rng, n=60)
    grouping = discrepancy_grouping_from_arrays(student, teacher, labels)
    masks = partition_masks(grouping)
    for flag, prefix in ((False, "incorrect"), (True, "correct")):
        size = grouping.subset_size(flag)
        if size == 0:
            continue
        k = max(1, round(0.2 * size))
        large, small = masks[f"{prefix}_large"], masks[f"{prefix}_small"]
        assert large.sum() == k and small.sum() == k
        assert grouping.st[large].min() >= grouping.st[small].max()
        assert not np.any(large & ~grouping.subset_mask(flag))


def test_stable_mean():
    assert stable_mean([0.3] * 7) == 0.3
    assert stable_mean([0.2, 0.4]) == pytest.approx(0.3)
    assert math.isnan(stable_mean([]))


def test_fusion_ratio_report_with_constant_alpha_is_exact(rng):
    student, teacher, labels = _fixture(rng, n=50)
    grouping = discrepancy_grouping_from_arrays(student, teacher, labels, np.arange(100, 150))
    log = _alpha_log(np.arange(100, 150)[::-1], {1: np.full(50, 0.5), 10: np.full(50, 0.25)})
    report = fusion_ratio_report(log, grouping)
    assert report["epoch"].tolist() == [1, 10]
    for name in ("incorrect_large", "incorrect_small", "correct_large", "correct_small"):
        if report[f"n_{name}"].iloc[0]:
            assert report[name].tolist() == [0.5, 0.25]


def test_fusion_ratio_report_aligns_by_sample_id(rng):
    student, teacher, labels = _fixture(rng, n=30)
    ids = np.arange(30)
    grouping = discrepancy_grouping_from_arrays(student, teacher, labels, ids)
    alphas = grouping.st / (1.0 + grouping.st)
    shuffled = rng.permutation(30)
    log = _alpha_log(ids[shuffled], {5: alphas[shuffled]})
    assert np.array_equal(alphas_for_epoch(log, grouping, 5), alphas)
    masks = partition_masks(grouping)
    report = fusion_ratio_report(log, grouping, epochs=[5])
    if masks["correct_large"].any():
        assert report["correct_large"].iloc[0] == pytest.approx(alphas[masks["correct_large"]].mean())


def test_fusion_ratio_report_matches_training_log_every_epoch(tmp_path, tiny_splits, tiny_teacher, tiny_config):
    result = run_distillation(tiny_config(policy="tgeo", epochs=4, outer_lr=0.5), tiny_splits, tiny_teacher)
    train = tiny_splits.train
    # grouping from the returned (best) student, as the analyze command builds it
    grouping = discrepancy_grouping_from_arrays(
        softmax_temp(forward(result.student, train.features)),
        softmax_temp(forward(tiny_teacher, train.features)),
        train.labels,
        train.ids,
    )
    alpha_log = read_alpha_dump(result.log.write_alpha_dump(tmp_path / "alpha.csv"))
    report = fusion_ratio_report(alpha_log, grouping)
    assert report["epoch"].tolist() == [1, 2, 3, 4]
    for row, record in zip(report.to_dict("records"), result.log.epochs):
        for name in PARTITION_NAMES:
            logged = record.alpha_stats[name][0]
            if math.isnan(logged):
                assert math.isnan(row[name])
            else:
                assert row[name] == pytest.approx(logged, rel=1e-12, abs=1e-15)


def test_alignment_errors_name_the_offending_id():
    with pytest.raises(DataError, match="first offending id 3"):
        align_by_id([1, 2, 7], [1, 2, 3])
    with pytest.raises(DataError, match="Sample id 2 appears"):
        align_by_id([1, 2, 2], [1, 2, 3])


def test_missing_epoch_is_a_data_error(rng):
    student, teacher, labels = _fixture(rng, n=10)
    grouping = discrepancy_grouping_from_arrays(student, teacher, labels)
    with pytest.raises(DataError):
        alphas_for_epoch(_alpha_log(np.arange(10), {1: np.zeros(10)}), grouping, 2)


def test_incorrect_and_outlier_summaries(rng):
    student, teacher, labels = _fixture(rng, n=40)
    grouping = discrepancy_grouping_from_arrays(student, teacher, labels)
    alphas = np.where(grouping.teacher_correct, 0.8, 0.2)
    summary = incorrect_sample_ratio_summary(alphas, grouping)
    assert summary["count"] == grouping.subset_size(False)
    if summary["count"]:
        assert summary["alpha_mean"] == 0.2
        assert summary["alpha_std"] == pytest.approx(0.0, abs=1e-15)
    is_outlier = np.zeros(40, dtype=bool)
    is_outlier[:4] = True
    frame = outlier_summary(np.where(is_outlier, 0.1, 0.6), grouping.st, is_outlier)
    assert frame["samples"].tolist() == ["normal", "outlier"]
    assert frame["count"].tolist() == [36, 4]
    assert frame["alpha_mean"].tolist() == [0.6, 0.1]


def test_ratio_histogram(tmp_path):
    centres, density = ratio_histogram(np.array([0.01, 0.02, 0.99, 0.5]), bins=20)
    assert centres[0] == pytest.approx(0.025)
    assert density.sum() * 0.05 == pytest.approx(1.0)
    empty_centres, empty_density = ratio_histogram(np.array([]))
    assert empty_centres.size == 20 and not empty_density.any()
    path = write_histogram(tmp_path / "h.dat", centres, density)
    lines = path.read_text().splitlines()
    assert lines[0] == "# bin_centre density"
    assert len(lines) == 21


def test_training_log_frames_and_dump_round_trip(tmp_path):
    log = TrainingLog()
    log.add_epoch(EpochRecord(1, 4, 0.9, 1.0, 0.5, "abc", {"all": (0.5, 0.0)}))
    snapshot = AlphaSnapshot(
        epoch=1,
        sample_ids=np.array([3, 1]),
        alphas=np.array([0.25, 0.75]),
        teacher_correct=np.array([True, False]),
        st=np.array([0.1, 0.2]),
        is_outlier=np.array([False, True]),
    )
    log.add_snapshot(snapshot)
    epochs = log.epoch_frame()
    assert epochs["alpha_mean_all"].tolist() == [0.5]
    assert math.isnan(epochs["alpha_mean_outlier"].iloc[0])
    log.write_epochs(tmp_path / "log.csv")
    dump = read_alpha_dump(log.write_alpha_dump(tmp_path / "alpha.csv"))
    assert tuple(dump.columns) == ALPHA_DUMP_COLUMNS
    assert dump["sample_id"].tolist() == [3, 1]
    assert dump["alpha"].tolist() == [0.25, 0.75]
    assert dump["is_outlier"].tolist() == [False, True]
    assert log.final_snapshot() is snapshot


def test_empty_training_log_still_writes_headers(tmp_path):
    log = TrainingLog()
    assert "val_acc" in log.epoch_frame().columns
    frame = pd.read_csv(log.write_alpha_dump(tmp_path / "alpha.csv"))
    assert tuple(frame.columns) == ALPHA_DUMP_COLUMNS


def test_read_alpha_dump_rejects_missing_columns(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("sample_id,alpha\n1,0.5\n")
    with pytest.raises(DataError):
        read_alpha_dump(path)
    with pytest.raises(DataError):
        read_alpha_dump(tmp_path / "absent.csv")


def test_triplet_dump_round_trip(tmp_path, rng):
    student, teacher, labels = _fixture(rng, n=5)
    dump = TripletDump(np.arange(5), labels, student, teacher, np.array([0, 0, 1, 0, 0], dtype=bool))
    loaded = TripletDump.read(dump.write(tmp_path / "triplets.csv"))
    assert loaded.num_classes == 3
    assert loaded.labels.tolist() == labels.tolist()
    assert loaded.student_probs == pytest.approx(student, abs=1e-15)
    assert len(loaded.triplets()) == 5
