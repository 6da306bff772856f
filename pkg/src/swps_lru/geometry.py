"""Planar transforms: rotation, training-time distortions, hanging normalization.

Rotation convention: points are row vectors and an angle ``alpha`` maps

    x' =  x * cos(alpha) + y * sin(alpha)
    y' = -x * sin(alpha) + y * cos(alpha)

i.e. the operator with parameter ``alpha`` turns the plane clockwise by
``alpha`` in the usual orientation, and parameters add under composition.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import DegenerateKeypoints
from .types import AugmentParams, Trajectory

HANGING_MODES = ("SC", "SE", "ASE")

# Keypoints closer than this cannot define a stable direction.
_KEYPOINT_EPS = 1e-9


def _rot_matrix(alpha: float) -> np.ndarray:
    c = math.cos(alpha)
    s = math.sin(alpha)
    # row-vector form: p' = p @ M
    return np.array([[c, -s], [s, c]])


def rotate(traj: Trajectory, alpha: float, center=(0.0, 0.0)) -> Trajectory:
    """Rotate every point by ``alpha`` about ``center`` (clockwise convention)."""
    m = _rot_matrix(alpha)
    c = np.asarray(center, dtype=np.float64)
    return traj.map_points(lambda s: (s - c) @ m + c)


def affine_jitter(traj: Trajectory, params: AugmentParams) -> Trajectory:
    """Axis scaling plus translation: x' = x*(1+sx) + tx and likewise for y."""
    gains = np.array([1.0 + params.scale_x, 1.0 + params.scale_y])
    shift = np.array([params.shift_x, params.shift_y])
    return traj.map_points(lambda s: s * gains + shift)


def elastic_distort(traj: Trajectory, eps: float) -> Trajectory:
    """Sinusoidal warp; both outputs read the pre-distortion coordinates.

        x'' = x' + eps * sin(2 pi y')
        y'' = y' + eps * sin(2 pi x')
    """

    def warp(s):
        x = s[:, 0]
        y = s[:, 1]
        out = np.empty_like(s)
        out[:, 0] = x + eps * np.sin(2.0 * math.pi * y)
        out[:, 1] = y + eps * np.sin(2.0 * math.pi * x)
        return out

    return traj.map_points(warp)


def hanging_keypoints(traj: Trajectory, mode: str = "SC"):
    """The anchor point S and the direction point C for a hanging mode.

    SC:  S = first point drawn, C = centroid of all points.
    SE:  S = first point drawn, C = last point drawn.
    ASE: S = mean of stroke start points, C = mean of stroke end points.
    """
    if mode not in HANGING_MODES:
        raise ValueError(f"unknown hanging mode {mode!r}; expected one of {HANGING_MODES}")
    if mode == "SC":
        s = traj.strokes[0][0]
        c = traj.points().mean(axis=0)
    elif mode == "SE":
        s = traj.strokes[0][0]
        c = traj.strokes[-1][-1]
    else:
        s = np.mean([st[0] for st in traj.strokes], axis=0)
        c = np.mean([st[-1] for st in traj.strokes], axis=0)
    return np.asarray(s, dtype=np.float64), np.asarray(c, dtype=np.float64)


def hanging_normalize(traj: Trajectory, mode: str = "SC") -> Trajectory:
    """Rotate the trajectory about S so that C hangs straight below it.

    The anchor S lands at the origin, which makes the result independent of
    any rotation applied beforehand: rotating the input co-rotates both
    keypoints, and anchoring at S removes the leftover translation.  If C
    still fails to sit strictly below S (impossible for exact arithmetic,
    kept as a guard) the trajectory is turned by a further half turn.

    Raises DegenerateKeypoints when |C - S| <= 1e-9.
    """
    s, c = hanging_keypoints(traj, mode)
    v = c - s
    if math.hypot(v[0], v[1]) <= _KEYPOINT_EPS:
        raise DegenerateKeypoints(
            f"hanging keypoints nearly coincide (|C - S| = {math.hypot(v[0], v[1]):.3e})"
        )
    theta = math.atan2(v[1], v[0]) + math.pi / 2.0
    m = _rot_matrix(theta)
    out = traj.map_points(lambda st: (st - s) @ m)
    c_mapped = (c - s) @ m
    if c_mapped[1] >= 0.0:
        out = out.map_points(lambda st: -st)
    return out


def sample_rotation(rng: np.random.Generator, max_abs: float) -> float:
    """Uniform angle in [-max_abs, max_abs]; 0 when the range is empty."""
    if max_abs <= 0.0:
        return 0.0
    return float(rng.uniform(-max_abs, max_abs))


def sample_augment(rng: np.random.Generator, scale: float, translate: float, elastic: float) -> AugmentParams:
    """Draw one set of distortion parameters from their uniform ranges."""
    return AugmentParams(
        scale_x=float(rng.uniform(-scale, scale)),
        scale_y=float(rng.uniform(-scale, scale)),
        shift_x=float(rng.uniform(-translate, translate)),
        shift_y=float(rng.uniform(-translate, translate)),
        elastic=float(rng.uniform(0.0, elastic)),
    )


def apply_augment(traj: Trajectory, params: AugmentParams) -> Trajectory:
    """Affine jitter followed by the elastic warp."""
    out = affine_jitter(traj, params)
    if params.elastic != 0.0:
        out = elastic_distort(out, params.elastic)
    return out
