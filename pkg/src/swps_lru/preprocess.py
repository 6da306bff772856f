"""Trajectory conditioning and per-step feature assembly.

Stage order used by the pipeline: redundancy removal, size normalization
to a centered unit bounding box, equal-arc-length resampling, optional
rotation and distortion, hanging normalization, then assembly of the
9-channel feature matrix [x, y, ink, p1, p2, dx, dy, ddx, ddy] that the
sliding-window signatures consume.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .types import (
    FeatureSequence,
    N_FEATURES,
    PEN_DOWN,
    PEN_UP,
    Trajectory,
)

# Column indices into the assembled feature matrix.
COL_X, COL_Y, COL_INK, COL_P1, COL_P2 = 0, 1, 2, 3, 4
COL_DX, COL_DY, COL_DDX, COL_DDY = 5, 6, 7, 8
DERIVATIVE_COLUMNS = (COL_DX, COL_DY, COL_DDX, COL_DDY)


@dataclass
class PreprocessConfig:
    """Knobs for the deterministic conditioning stages."""

    redundancy_tol: float = 1e-3
    resample_spacing: float = 0.02
    target_length: int = 128
    pad_policy: str = "repeat_last"

    def __post_init__(self):
        if self.redundancy_tol < 0.0:
            raise ValueError(f"redundancy_tol must be >= 0, got {self.redundancy_tol}")
        if self.resample_spacing <= 0.0:
            raise ValueError(f"resample_spacing must be > 0, got {self.resample_spacing}")
        if self.target_length < 2:
            raise ValueError(f"target_length must be >= 2, got {self.target_length}")
        if self.pad_policy != "repeat_last":
            raise ValueError(f"unknown pad policy {self.pad_policy!r}")


def _dedupe_stroke(pts: np.ndarray, tol: float) -> np.ndarray:
    """Collapse runs of near-identical consecutive points.

    Each run keeps its first point.  The stroke's final point is appended
    back if it was dropped and differs in value from the last survivor, so
    endpoints are preserved exactly while exact duplicates still collapse.
    """
    if len(pts) == 1:
        return pts.copy()
    keep = [pts[0]]
    for p in pts[1:]:
        if np.hypot(*(p - keep[-1])) > tol:
            keep.append(p)
    if not np.array_equal(keep[-1], pts[-1]):
        keep.append(pts[-1])
    return np.array(keep)


def _point_segment_dist(pts: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Distance from each point to the segment a-b (degenerate chord = point)."""
    ab = b - a
    denom = float(ab @ ab)
    if denom == 0.0:
        return np.hypot(pts[:, 0] - a[0], pts[:, 1] - a[1])
    s = np.clip((pts - a) @ ab / denom, 0.0, 1.0)
    proj = a + s[:, None] * ab
    return np.hypot(pts[:, 0] - proj[:, 0], pts[:, 1] - proj[:, 1])


def _chord_simplify(pts: np.ndarray, tol: float) -> np.ndarray:
    """Drop interior points within ``tol`` of the chord through their kept
    neighbours (recursive maximum-deviation splitting, so a second pass
    finds nothing new)."""
    n = len(pts)
    if n < 3:
        return pts.copy()
    keep = np.zeros(n, dtype=bool)
    keep[0] = keep[-1] = True
    stack = [(0, n - 1)]
    while stack:
        i, j = stack.pop()
        if j - i < 2:
            continue
        dists = _point_segment_dist(pts[i + 1 : j], pts[i], pts[j])
        k = int(np.argmax(dists))
        if dists[k] > tol:
            split = i + 1 + k
            keep[split] = True
            stack.append((i, split))
            stack.append((split, j))
    return pts[keep]


def remove_redundant(traj: Trajectory, tol: float = 1e-3) -> Trajectory:
    """Deduplicate consecutive points and drop near-collinear interior points.

    Idempotent: a second application changes nothing.
    """
    if tol < 0.0:
        raise ValueError(f"tolerance must be >= 0, got {tol}")
    strokes = []
    for s in traj.strokes:
        s = _dedupe_stroke(s, tol)
        s = _chord_simplify(s, tol)
        strokes.append(s)
    return Trajectory(strokes)


def size_normalize(traj: Trajectory) -> Trajectory:
    """Scale uniformly so the larger bounding-box side is 1, centered at 0.

    A degenerate extent (single point, all points equal) is only centered.
    """
    pts = traj.points()
    lo = pts.min(axis=0)
    hi = pts.max(axis=0)
    side = float(max(hi[0] - lo[0], hi[1] - lo[1]))
    center = (lo + hi) / 2.0
    if side <= 0.0:
        return traj.map_points(lambda s: s - center)
    return traj.map_points(lambda s: (s - center) / side)


def _resample_stroke(pts: np.ndarray, spacing: float) -> np.ndarray:
    seglens = np.hypot(*np.diff(pts, axis=0).T) if len(pts) > 1 else np.zeros(0)
    total = float(seglens.sum())
    if total <= 0.0:
        return pts[:1].copy()
    # drop zero-length segments so the arc-length parameter is increasing
    keep = np.concatenate([[True], seglens > 0.0])
    pts = pts[keep]
    cum = np.concatenate([[0.0], np.cumsum(seglens[seglens > 0.0])])
    n_int = max(1, int(round(total / spacing)))
    targets = np.linspace(0.0, total, n_int + 1)
    out = np.column_stack(
        [np.interp(targets, cum, pts[:, 0]), np.interp(targets, cum, pts[:, 1])]
    )
    out[0] = pts[0]
    out[-1] = pts[-1]
    return out


def resample_penspeed(traj: Trajectory, spacing: float = 0.02) -> Trajectory:
    """Re-sample each stroke at equal arc-length steps, keeping both endpoints.

    The step count per stroke is round(length / spacing), floored at one
    interval; a stroke shorter than half the spacing keeps only its
    endpoints, and a zero-length stroke collapses to a single point.
    """
    if spacing <= 0.0:
        raise ValueError(f"spacing must be > 0, got {spacing}")
    return Trajectory([_resample_stroke(s, spacing) for s in traj.strokes])


def derivative_features(values: np.ndarray) -> tuple:
    """First and second forward differences with zero at the first step.

    delta_1 = 0, delta_i = v_i - v_{i-1}; same rule again for the second
    difference.
    """
    v = np.asarray(values, dtype=np.float64)
    d1 = np.concatenate([[0.0], np.diff(v)])
    d2 = np.concatenate([[0.0], np.diff(d1)])
    return d1, d2


def scale_channels(rows: np.ndarray, columns) -> np.ndarray:
    """Min-max scale the selected columns to [-1, 1] per sample.

    A constant column maps to zeros.  Returns a copy.
    """
    out = np.array(rows, dtype=np.float64)
    for c in columns:
        lo = out[:, c].min()
        hi = out[:, c].max()
        span = hi - lo
        if span <= 0.0:
            out[:, c] = 0.0
        else:
            out[:, c] = 2.0 * (out[:, c] - lo) / span - 1.0
    return out


def fit_length(rows: np.ndarray, target: int) -> tuple:
    """Truncate or pad the feature matrix to ``target`` rows, with a mask.

    Padding repeats the last row but zeroes its derivative channels and
    sets the pen state to Continuous, so padded windows contribute
    near-degenerate signatures.
    """
    rows = np.asarray(rows, dtype=np.float64)
    n = rows.shape[0]
    if n >= target:
        out = rows[:target].copy()
        mask = np.ones(target, dtype=bool)
        return out, mask
    pad = np.repeat(rows[-1:], target - n, axis=0)
    pad[:, [COL_P1, COL_P2]] = 0.0
    pad[:, list(DERIVATIVE_COLUMNS)] = 0.0
    out = np.concatenate([rows, pad], axis=0)
    mask = np.zeros(target, dtype=bool)
    mask[:n] = True
    return out, mask


def assemble_features(traj: Trajectory, cfg: PreprocessConfig) -> FeatureSequence:
    """Build the length-fitted (L, 9) feature matrix for one trajectory.

    Channels: positions as-is (already size-normalized upstream), ink as
    normalized drawing progress, the three pen-state steps one-hot over
    (p1, p2), and min-max-scaled first/second differences of x and y.
    """
    pts = traj.points()
    n = pts.shape[0]
    rows = np.zeros((n, N_FEATURES))
    rows[:, COL_X] = pts[:, 0]
    rows[:, COL_Y] = pts[:, 1]
    if n > 1:
        rows[:, COL_INK] = np.arange(n) / (n - 1)
    # pen states: stroke ends first so a 1-point stroke reads as PenDown
    pos = 0
    for s in traj.strokes:
        rows[pos + len(s) - 1, [COL_P1, COL_P2]] = PEN_UP
        rows[pos, [COL_P1, COL_P2]] = PEN_DOWN
        pos += len(s)
    rows[:, COL_DX], rows[:, COL_DDX] = derivative_features(rows[:, COL_X])
    rows[:, COL_DY], rows[:, COL_DDY] = derivative_features(rows[:, COL_Y])
    rows = scale_channels(rows, DERIVATIVE_COLUMNS)
    fitted, mask = fit_length(rows, cfg.target_length)
    return FeatureSequence(fitted, mask)
