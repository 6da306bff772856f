"""End-to-end feature pipeline: raw strokes to windowed signature rows.

Stage order: redundancy removal, size normalization, equal-arc-length
resampling (all deterministic and rotation-independent, so callers cache
that prefix), then optional rotation, optional training-time distortion,
hanging normalization, feature assembly, sliding-window signatures.
"""

from __future__ import annotations

import numpy as np

from .errors import DegenerateKeypoints
from .geometry import apply_augment, hanging_normalize, rotate
from .preprocess import assemble_features, remove_redundant, resample_penspeed, size_normalize
from .signature import sliding_window_signature
from .types import Trajectory


def normalize_trajectory(traj: Trajectory, pre_cfg) -> Trajectory:
    """The deterministic pipeline prefix shared by every presentation."""
    t = remove_redundant(traj, pre_cfg.redundancy_tol)
    t = size_normalize(t)
    return resample_penspeed(t, pre_cfg.resample_spacing)


def windows_from_normalized(traj: Trajectory, cfg, angle=None, augment=None):
    """Finish the pipeline for one presentation of a normalized trajectory.

    ``angle`` rotates about the origin before everything else; ``augment``
    applies the affine-plus-elastic distortion.  When hanging normalization
    is enabled but its keypoints degenerate, the trajectory passes through
    unchanged and the degenerate flag is set.

    Returns (rows, degenerate) with rows shaped (K, dim).
    """
    t = traj
    if angle:
        t = rotate(t, angle)
    if augment is not None:
        t = apply_augment(t, augment)
    degenerate = False
    if cfg.geometry.hanging:
        try:
            t = hanging_normalize(t, cfg.geometry.hanging_mode)
        except DegenerateKeypoints:
            degenerate = True
    feats = assemble_features(t, cfg.preprocess)
    ws = sliding_window_signature(feats.rows, cfg.window)
    return ws.rows, degenerate


def sample_windows(sample, cfg, angle=None, augment=None):
    """Full pipeline for one raw sample."""
    traj = normalize_trajectory(sample.trajectory(), cfg.preprocess)
    return windows_from_normalized(traj, cfg, angle=angle, augment=augment)


def dataset_windows(samples, cfg, angles=None):
    """Stack pipeline output for many samples (no augmentation).

    ``angles`` is an optional per-sample rotation; returns (x, n_degenerate)
    with x shaped (N, K, dim).
    """
    rows = []
    degen = 0
    for i, sample in enumerate(samples):
        angle = None if angles is None else angles[i]
        w, d = sample_windows(sample, cfg, angle=angle)
        rows.append(w)
        degen += int(d)
    return np.stack(rows), degen
