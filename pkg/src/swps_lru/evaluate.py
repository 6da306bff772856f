"""Evaluation: rotation grids, voting ensembles, experiment sweeps.

Grid rotations are applied at the pipeline's rotation stage (after the
deterministic resampling prefix), which is the same place training injects
its random angles; with hanging normalization on, every grid replica of a
sample therefore collapses to the same normalized trajectory.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import lru, pipeline, train
from .signature import WindowSpec
from .types import Dataset


@dataclass
class RotationGrid:
    """Evenly spaced test rotations: angles k*step for k = 0..count-1."""

    count: int = 30
    step: float = math.pi / 15.0

    def __post_init__(self):
        if self.count < 1:
            raise ValueError(f"grid count must be >= 1, got {self.count}")

    def angles(self) -> np.ndarray:
        return np.arange(self.count) * self.step


def _wrap_angle(a: float) -> float:
    """Map to (-pi, pi]."""
    w = math.fmod(a + math.pi, 2.0 * math.pi)
    if w <= 0.0:
        w += 2.0 * math.pi
    return w - math.pi


@dataclass
class RotatedTestSet:
    """A dataset expanded so each replica carries a fixed test rotation."""

    samples: list
    labels: np.ndarray
    angles: np.ndarray
    base_index: np.ndarray
    label_map: dict

    def __len__(self):
        return len(self.samples)


def rotation_grid_expand(test_set: Dataset, grid: RotationGrid, max_abs=None) -> RotatedTestSet:
    """Replicate every sample across the grid angles (labels preserved).

    ``max_abs`` keeps only angles whose wrapped value lies in
    [-max_abs, max_abs]; angle 0 always survives.
    """
    angles = grid.angles()
    if max_abs is not None:
        kept = [a for a in angles if abs(_wrap_angle(a)) <= max_abs + 1e-12]
        angles = np.array(kept if kept else [0.0])
    samples = []
    labels = []
    angle_col = []
    base = []
    ds_labels = test_set.labels()
    for i, sample in enumerate(test_set.samples):
        for a in angles:
            samples.append(sample)
            labels.append(ds_labels[i])
            angle_col.append(a)
            base.append(i)
    return RotatedTestSet(
        samples=samples,
        labels=np.array(labels, dtype=np.int64),
        angles=np.array(angle_col),
        base_index=np.array(base, dtype=np.int64),
        label_map=test_set.label_map,
    )


def _prepared(data):
    """Normalise Dataset / RotatedTestSet into (samples, labels, angles, base)."""
    if isinstance(data, RotatedTestSet):
        return data.samples, data.labels, data.angles, data.base_index
    labels = data.labels()
    n = len(data.samples)
    return data.samples, labels, np.zeros(n), np.arange(n)


def probabilities(model, data, cfg, batch: int = 256):
    """Eval-mode class probabilities; returns (probs, labels, n_degenerate).

    The rotation-independent pipeline prefix is computed once per distinct
    base sample.  Degenerate-keypoint replicas fall back to the identity
    and are classified normally.
    """
    samples, labels, angles, base = _prepared(data)
    cache = {}
    rows = []
    degenerate = 0
    for i, sample in enumerate(samples):
        b = int(base[i])
        if b not in cache:
            cache[b] = pipeline.normalize_trajectory(sample.trajectory(), cfg.preprocess)
        w, d = pipeline.windows_from_normalized(cache[b], cfg, angle=float(angles[i]) or None)
        rows.append(w)
        degenerate += int(d)
    x = np.stack(rows)
    probs = np.empty((x.shape[0], model.n_classes))
    for start in range(0, x.shape[0], batch):
        logits, _ = lru.forward_batch(model, x[start : start + batch], train=False)
        probs[start : start + batch] = lru.softmax(logits)
    return probs, labels, degenerate


def accuracy(model, data, cfg) -> float:
    """Fraction of samples whose argmax probability hits the true label."""
    probs, labels, _ = probabilities(model, data, cfg)
    return float(np.mean(np.argmax(probs, axis=1) == labels))


def confusion(model, data, cfg) -> np.ndarray:
    """Counts[true, predicted] over the evaluation set."""
    probs, labels, _ = probabilities(model, data, cfg)
    preds = np.argmax(probs, axis=1)
    n = model.n_classes
    out = np.zeros((n, n), dtype=np.int64)
    np.add.at(out, (labels, preds), 1)
    return out


def soft_vote(member_probs) -> int:
    """Argmax of the elementwise mean probability (ties: lowest index)."""
    mean = np.mean(np.asarray(member_probs, dtype=np.float64), axis=0)
    return int(np.argmax(mean))


def hard_vote(member_labels) -> int:
    """Majority label (ties: lowest label index)."""
    votes = np.bincount(np.asarray(member_labels, dtype=np.int64))
    return int(np.argmax(votes))


def ensemble_accuracy(models, data, cfg, mode: str = "soft") -> float:
    """Accuracy of the voting ensemble over the member models."""
    if mode not in ("soft", "hard"):
        raise ValueError(f"mode must be 'soft' or 'hard', got {mode!r}")
    member_probs = []
    labels = None
    for m in models:
        p, labels, _ = probabilities(m, data, cfg)
        member_probs.append(p)
    stacked = np.stack(member_probs)  # (M, N, C)
    if mode == "soft":
        preds = np.argmax(stacked.mean(axis=0), axis=1)
    else:
        preds = np.array([hard_vote(np.argmax(stacked[:, i, :], axis=1)) for i in range(stacked.shape[1])])
    return float(np.mean(preds == labels))


@dataclass
class ReportRow:
    config_key: str
    accuracy: float
    n_samples: int
    seeds: tuple


@dataclass
class ExperimentReport:
    rows: list = field(default_factory=list)
    errors: list = field(default_factory=list)

    def sorted_rows(self):
        return sorted(self.rows, key=lambda r: r.config_key)


def report_to_csv(report: ExperimentReport, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["config_key", "accuracy", "n_samples", "seeds"])
        for r in report.sorted_rows():
            writer.writerow([r.config_key, repr(r.accuracy), r.n_samples, ";".join(str(s) for s in r.seeds)])


def _train_and_score(cfg, train_set, test, seed):
    cfg = replace(cfg, seed=seed)
    model = train.build_model_for(cfg, train_set.n_classes)
    model, _ = train.train_loop(model, train_set, cfg)
    return accuracy(model, test, cfg)


def sweep_window_degree(
    base_cfg,
    train_set: Dataset,
    test_set: Dataset,
    w_list=(3, 5, 7),
    m_list=(1, 2),
    hanging_list=(True, False),
    grid: RotationGrid | None = None,
    seeds=(0,),
) -> ExperimentReport:
    """Train and score one model per (w, m, hanging, seed) cell.

    Per-cell accuracy is the mean over seeds on the grid-expanded test set.
    A failing cell is recorded in ``report.errors`` and the sweep moves on.
    """
    grid = grid or RotationGrid()
    report = ExperimentReport()
    expanded = rotation_grid_expand(test_set, grid)
    for w in w_list:
        for m in m_list:
            for hang in hanging_list:
                key = f"w={w},m={m},hanging={'on' if hang else 'off'}"
                try:
                    cfg = replace(
                        base_cfg,
                        window=WindowSpec(w=w, t=base_cfg.window.t, m=m),
                        geometry=replace(base_cfg.geometry, hanging=hang),
                    )
                    accs = [_train_and_score(cfg, train_set, expanded, s) for s in seeds]
                    report.rows.append(ReportRow(key, float(np.mean(accs)), len(expanded), tuple(seeds)))
                except Exception as exc:  # noqa: BLE001 - cell isolation is the contract
                    report.errors.append((key, f"{type(exc).__name__}: {exc}"))
    return report


def rotation_range_experiment(
    base_cfg,
    train_set: Dataset,
    test_set: Dataset,
    ranges=(0.0, math.pi / 6, math.pi / 2, math.pi),
    grid: RotationGrid | None = None,
    seeds=(0,),
) -> ExperimentReport:
    """Train at each rotation range and test on the grid restricted to it."""
    if list(ranges) != sorted(ranges):
        raise ValueError("ranges must be sorted ascending")
    grid = grid or RotationGrid()
    report = ExperimentReport()
    for r in ranges:
        deg = int(round(math.degrees(r)))
        key = f"range={deg}deg"
        try:
            cfg = replace(base_cfg, geometry=replace(base_cfg.geometry, rotation_max=r))
            expanded = rotation_grid_expand(test_set, grid, max_abs=r)
            accs = [_train_and_score(cfg, train_set, expanded, s) for s in seeds]
            report.rows.append(ReportRow(key, float(np.mean(accs)), len(expanded), tuple(seeds)))
        except Exception as exc:  # noqa: BLE001
            report.errors.append((key, f"{type(exc).__name__}: {exc}"))
    return report
