"""Core data containers: strokes, samples, datasets, feature sequences.

A trajectory is an ordered list of strokes; a stroke is an (n, 2) float64
array of planar points in drawing order.  Samples pair a trajectory with a
class tag; a dataset adds the tag -> index mapping used by the model head.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import StructuralError

# Pen-state vectors (p1, p2) attached to every time step of the assembled
# feature sequence.  A 1-point stroke counts as PenDown.
PEN_DOWN = (0.0, 1.0)
PEN_CONTINUE = (0.0, 0.0)
PEN_UP = (1.0, 0.0)

# Column layout of the assembled per-step feature matrix.
FEATURE_COLUMNS = ("x", "y", "ink", "p1", "p2", "dx", "dy", "ddx", "ddy")
N_FEATURES = len(FEATURE_COLUMNS)


def as_stroke(points) -> np.ndarray:
    """Coerce a point sequence to a float64 (n, 2) array."""
    arr = np.asarray(points, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 2 or arr.shape[0] == 0:
        raise ValueError(f"stroke must be a non-empty (n, 2) array, got shape {arr.shape}")
    return arr


@dataclass
class Trajectory:
    """An ordered list of strokes, each an (n_i, 2) float64 array."""

    strokes: list

    def __post_init__(self):
        if not self.strokes:
            raise ValueError("trajectory must contain at least one stroke")
        self.strokes = [as_stroke(s) for s in self.strokes]

    @property
    def n_points(self) -> int:
        return sum(len(s) for s in self.strokes)

    def points(self) -> np.ndarray:
        """All points concatenated in drawing order, shape (n_points, 2)."""
        return np.concatenate(self.strokes, axis=0)

    def map_points(self, fn) -> "Trajectory":
        """Apply a pointwise map (n, 2) -> (n, 2) to every stroke."""
        return Trajectory([fn(s) for s in self.strokes])

    def copy(self) -> "Trajectory":
        return Trajectory([s.copy() for s in self.strokes])


@dataclass
class RawSample:
    """A labelled trajectory as it arrives from ingest."""

    tag: str
    strokes: list

    def __post_init__(self):
        self.strokes = [as_stroke(s) for s in self.strokes]

    def trajectory(self) -> Trajectory:
        return Trajectory([s.copy() for s in self.strokes])

    def __eq__(self, other):
        if not isinstance(other, RawSample):
            return NotImplemented
        if self.tag != other.tag or len(self.strokes) != len(other.strokes):
            return False
        return all(np.array_equal(a, b) for a, b in zip(self.strokes, other.strokes))


@dataclass
class Dataset:
    """Samples plus the tag -> class-index mapping shared by every split."""

    samples: list
    label_map: dict

    @classmethod
    def from_samples(cls, samples) -> "Dataset":
        """Build with a label map over the sorted distinct tags."""
        tags = sorted({s.tag for s in samples})
        return cls(list(samples), {t: i for i, t in enumerate(tags)})

    @property
    def n_classes(self) -> int:
        return len(self.label_map)

    def labels(self) -> np.ndarray:
        """Integer class label per sample, in sample order."""
        return np.array([self.label_map[s.tag] for s in self.samples], dtype=np.int64)

    def validate(self):
        """Check label-map contiguity and that every sample tag is mapped."""
        indices = sorted(self.label_map.values())
        if indices != list(range(len(indices))):
            raise StructuralError(f"label map indices not contiguous from 0: {indices}")
        for s in self.samples:
            if s.tag not in self.label_map:
                raise StructuralError(f"sample tag {s.tag!r} missing from label map")

    def __len__(self):
        return len(self.samples)


@dataclass
class SplitSpec:
    """Deterministic stratified split parameters."""

    train_fraction: float = 0.8
    seed: int = 0


@dataclass
class FeatureSequence:
    """Length-fitted per-step feature matrix plus its real-step mask."""

    rows: np.ndarray  # (L, 9) float64
    mask: np.ndarray  # (L,) bool, True for real (unpadded) steps

    def __post_init__(self):
        self.rows = np.asarray(self.rows, dtype=np.float64)
        self.mask = np.asarray(self.mask, dtype=bool)
        if self.rows.ndim != 2 or self.rows.shape[1] != N_FEATURES:
            raise ValueError(f"feature rows must be (L, {N_FEATURES}), got {self.rows.shape}")
        if self.mask.shape != (self.rows.shape[0],):
            raise ValueError("mask length must equal number of rows")


@dataclass
class WindowedSignature:
    """Per-window signature features for one sample: rows (K, dim)."""

    rows: np.ndarray

    def __post_init__(self):
        self.rows = np.asarray(self.rows, dtype=np.float64)
        if self.rows.ndim != 2:
            raise ValueError("windowed signature rows must be 2-D")

    @property
    def n_windows(self) -> int:
        return self.rows.shape[0]

    @property
    def dim(self) -> int:
        return self.rows.shape[1]


@dataclass
class AugmentParams:
    """One draw of the training-time distortion parameters."""

    scale_x: float = 0.0
    scale_y: float = 0.0
    shift_x: float = 0.0
    shift_y: float = 0.0
    elastic: float = 0.0


@dataclass
class HistoryRow:
    """One epoch of training history."""

    epoch: int
    loss: float
    train_acc: float
    val_acc: float | None
    lr: float


@dataclass
class TrainHistory:
    rows: list = field(default_factory=list)

    def append(self, row: HistoryRow):
        self.rows.append(row)

    def final(self) -> HistoryRow:
        if not self.rows:
            raise ValueError("empty training history")
        return self.rows[-1]
