"""Rotation-grid evaluation, voting ensembles, and the experiment reports."""

import csv
import math
from dataclasses import replace

import numpy as np
import pytest

from conftest import tiny_config
from swps_lru import evaluate, ingest, train
from swps_lru.evaluate import (
    ExperimentReport,
    ReportRow,
    RotationGrid,
    hard_vote,
    rotation_grid_expand,
    soft_vote,
)
from swps_lru.types import SplitSpec


def trained_fixture(seed=0, n_classes=2, per_class=4, epochs=2, **cfg_kw):
    cfg = tiny_config(
        seed=seed, target_length=24, w=4, t=2, hidden=8, state_dim=6, blocks=1,
        epochs=epochs, batch_size=4, **cfg_kw
    )
    data = ingest.synth_generate(n_classes, per_class, noise=1.0, seed=0)
    train_set, test_set = ingest.split_dataset(data, SplitSpec(train_fraction=0.5))
    model = train.build_model_for(cfg, data.n_classes)
    model, _ = train.train_loop(model, train_set, cfg)
    return model, train_set, test_set, cfg


# ------------------------------------------------------------ rotation grid


def test_grid_default_angles():
    grid = RotationGrid()
    angles = grid.angles()
    assert len(angles) == 30
    assert angles[0] == 0.0
    np.testing.assert_allclose(np.diff(angles), math.pi / 15.0)
    assert angles[-1] == pytest.approx(29.0 * math.pi / 15.0)


def test_grid_validation():
    with pytest.raises(ValueError):
        RotationGrid(count=0)


def test_expand_counts_and_labels():
    data = ingest.synth_generate(3, 2, noise=1.0, seed=0)
    out = rotation_grid_expand(data, RotationGrid())
    assert len(out) == 6 * 30
    assert out.labels.shape == (180,)
    # per-class balance is preserved
    for cls in range(3):
        assert int(np.sum(out.labels == cls)) == 60
    # every replica points back at its base sample
    for i in (0, 31, 179):
        assert out.samples[i] is data.samples[out.base_index[i]]
    np.testing.assert_allclose(out.angles[:30], RotationGrid().angles())


def test_expand_single_angle_identity():
    data = ingest.synth_generate(2, 2, noise=1.0, seed=0)
    out = rotation_grid_expand(data, RotationGrid(count=1))
    assert len(out) == 4
    np.testing.assert_array_equal(out.angles, np.zeros(4))
    np.testing.assert_array_equal(out.labels, data.labels())


def test_expand_max_abs_restriction():
    data = ingest.synth_generate(1, 1, noise=0.0)
    out = rotation_grid_expand(data, RotationGrid(), max_abs=math.pi / 6.0)
    # wrapped grid angles within +-30 degrees: 0, 12, 24, -24, -12
    assert len(out) == 5
    wrapped = [a if a <= math.pi else a - 2.0 * math.pi for a in out.angles]
    assert max(abs(a) for a in wrapped) <= math.pi / 6.0 + 1e-9
    assert 0.0 in out.angles


def test_expand_max_abs_zero_keeps_identity():
    data = ingest.synth_generate(1, 2, noise=0.0)
    out = rotation_grid_expand(data, RotationGrid(), max_abs=0.0)
    assert len(out) == 2
    np.testing.assert_array_equal(out.angles, np.zeros(2))


# ------------------------------------------------------------ probabilities


def test_probabilities_shape_and_simplex():
    model, _, test_set, cfg = trained_fixture()
    probs, labels, degenerate = evaluate.probabilities(model, test_set, cfg)
    assert probs.shape == (len(test_set), 2)
    np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-12)
    assert probs.min() >= 0.0
    assert degenerate == 0
    np.testing.assert_array_equal(labels, test_set.labels())


def test_probabilities_collapse_under_hanging():
    # with hanging normalization on, every rotated replica of a sample must
    # produce the same probability row as the unrotated one
    model, _, test_set, cfg = trained_fixture()
    expanded = rotation_grid_expand(test_set, RotationGrid(count=8))
    probs, _, _ = evaluate.probabilities(model, expanded, cfg)
    per_base = probs.reshape(len(test_set), 8, -1)
    np.testing.assert_allclose(
        per_base, np.broadcast_to(per_base[:, :1, :], per_base.shape), atol=1e-6
    )


def test_rotation_moves_probabilities_without_hanging():
    model, _, test_set, cfg = trained_fixture(hanging=False)
    expanded = rotation_grid_expand(test_set, RotationGrid(count=8))
    probs, _, _ = evaluate.probabilities(model, expanded, cfg)
    per_base = probs.reshape(len(test_set), 8, -1)
    assert not np.allclose(per_base, per_base[:, :1, :], atol=1e-6)


def test_accuracy_in_unit_interval_and_matches_probs():
    model, _, test_set, cfg = trained_fixture()
    acc = evaluate.accuracy(model, test_set, cfg)
    probs, labels, _ = evaluate.probabilities(model, test_set, cfg)
    want = float(np.mean(np.argmax(probs, axis=1) == labels))
    assert acc == want
    assert 0.0 <= acc <= 1.0


def test_confusion_totals():
    model, _, test_set, cfg = trained_fixture()
    mat = evaluate.confusion(model, test_set, cfg)
    assert mat.shape == (2, 2)
    assert mat.sum() == len(test_set)
    np.testing.assert_array_equal(mat.sum(axis=1), np.bincount(test_set.labels(), minlength=2))
    acc = evaluate.accuracy(model, test_set, cfg)
    assert np.trace(mat) == pytest.approx(acc * len(test_set))


# ------------------------------------------------------------------- voting


def test_soft_vote_mean():
    assert soft_vote([[0.6, 0.4], [0.3, 0.7]]) == 1
    assert soft_vote([[0.9, 0.1], [0.3, 0.7]]) == 0


def test_soft_vote_tie_lowest_index():
    assert soft_vote([[0.5, 0.5]]) == 0
    assert soft_vote([[0.2, 0.3, 0.5], [0.8, 0.1, 0.1]]) == 0  # means tie at 0.5/0.2/0.3


def test_hard_vote_majority():
    assert hard_vote([0, 1, 1]) == 1
    assert hard_vote([2, 2, 0]) == 2


def test_hard_vote_tie_lowest_label():
    assert hard_vote([0, 1]) == 0
    assert hard_vote([3, 1, 3, 1]) == 1


def test_ensemble_of_identical_models_matches_single():
    model, _, test_set, cfg = trained_fixture()
    single = evaluate.accuracy(model, test_set, cfg)
    for mode in ("soft", "hard"):
        assert evaluate.ensemble_accuracy([model, model, model], test_set, cfg, mode=mode) == single


def test_ensemble_mode_validation():
    model, _, test_set, cfg = trained_fixture()
    with pytest.raises(ValueError):
        evaluate.ensemble_accuracy([model], test_set, cfg, mode="mean")


# ------------------------------------------------------------------ reports


def test_report_rows_sorted_and_csv(tmp_path):
    report = ExperimentReport(
        rows=[
            ReportRow("w=5,m=1,hanging=on", 0.75, 40, (0, 1)),
            ReportRow("w=3,m=2,hanging=off", 0.5, 40, (0,)),
        ]
    )
    assert [r.config_key for r in report.sorted_rows()][0] == "w=3,m=2,hanging=off"
    path = tmp_path / "report.csv"
    evaluate.report_to_csv(report, path)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["config_key", "accuracy", "n_samples", "seeds"]
    assert rows[1] == ["w=3,m=2,hanging=off", "0.5", "40", "0"]
    assert rows[2] == ["w=5,m=1,hanging=on", "0.75", "40", "0;1"]


def test_sweep_layout_and_keys():
    _, train_set, test_set, cfg = trained_fixture(epochs=1)
    report = evaluate.sweep_window_degree(
        cfg, train_set, test_set, w_list=(3, 4), m_list=(1,), hanging_list=(True,),
        grid=RotationGrid(count=2), seeds=(0,),
    )
    assert report.errors == []
    assert [r.config_key for r in report.sorted_rows()] == [
        "w=3,m=1,hanging=on",
        "w=4,m=1,hanging=on",
    ]
    for row in report.rows:
        assert row.n_samples == len(test_set) * 2
        assert row.seeds == (0,)
        assert 0.0 <= row.accuracy <= 1.0


def test_sweep_isolates_failing_cells():
    _, train_set, test_set, cfg = trained_fixture(epochs=1)
    # w=40 exceeds the 24-step sequences: that cell must fail alone
    report = evaluate.sweep_window_degree(
        cfg, train_set, test_set, w_list=(3, 40), m_list=(1,), hanging_list=(True,),
        grid=RotationGrid(count=1), seeds=(0,),
    )
    assert [r.config_key for r in report.rows] == ["w=3,m=1,hanging=on"]
    assert len(report.errors) == 1
    key, message = report.errors[0]
    assert key == "w=40,m=1,hanging=on"
    assert "40" in message


def test_rotation_range_rows():
    _, train_set, test_set, cfg = trained_fixture(epochs=1)
    report = evaluate.rotation_range_experiment(
        cfg, train_set, test_set, ranges=(0.0, math.pi), grid=RotationGrid(count=4), seeds=(0,),
    )
    assert report.errors == []
    assert [r.config_key for r in report.rows] == ["range=0deg", "range=180deg"]
    # range 0 keeps only the identity angle; the full range keeps all four
    assert report.rows[0].n_samples == len(test_set)
    assert report.rows[1].n_samples == len(test_set) * 4


def test_rotation_range_requires_sorted():
    _, train_set, test_set, cfg = trained_fixture(epochs=1)
    with pytest.raises(ValueError):
        evaluate.rotation_range_experiment(cfg, train_set, test_set, ranges=(1.0, 0.5))


def test_train_and_score_seed_override():
    _, train_set, test_set, cfg = trained_fixture(epochs=1)
    a = evaluate._train_and_score(cfg, train_set, test_set, seed=0)
    b = evaluate._train_and_score(cfg, train_set, test_set, seed=0)
    assert a == b
