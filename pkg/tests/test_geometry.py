"""Planar transforms and the rotation-invariant hanging normalization."""

import numpy as np
import pytest

from conftest import random_trajectory, traj
from swps_lru import geometry as geo
from swps_lru.errors import DegenerateKeypoints
from swps_lru.types import AugmentParams


NO_JITTER = AugmentParams(0.0, 0.0, 0.0, 0.0, 0.0)


# ------------------------------------------------------------------- rotate


def test_rotate_quarter_turn():
    out = geo.rotate(traj([(1.0, 0.0), (0.0, 1.0)]), np.pi / 2.0)
    np.testing.assert_allclose(out.strokes[0], [(0.0, -1.0), (1.0, 0.0)], atol=1e-12)


def test_rotate_zero_is_identity(rng):
    t = random_trajectory(rng)
    out = geo.rotate(t, 0.0)
    np.testing.assert_allclose(out.points(), t.points(), atol=0)


def test_rotate_inverse(rng):
    t = random_trajectory(rng)
    alpha = float(rng.uniform(-np.pi, np.pi))
    back = geo.rotate(geo.rotate(t, alpha), -alpha)
    np.testing.assert_allclose(back.points(), t.points(), atol=1e-12)


def test_rotate_parameters_add(rng):
    t = random_trajectory(rng)
    a, b = rng.uniform(-2.0, 2.0, size=2)
    once = geo.rotate(t, a + b)
    twice = geo.rotate(geo.rotate(t, a), b)
    np.testing.assert_allclose(once.points(), twice.points(), atol=1e-12)


def test_rotate_about_center():
    out = geo.rotate(traj([(2.0, 1.0)]), np.pi, center=(1.0, 1.0))
    np.testing.assert_allclose(out.strokes[0], [(0.0, 1.0)], atol=1e-12)


def test_rotate_is_isometry(rng):
    t = random_trajectory(rng, n_strokes=1)
    out = geo.rotate(t, 0.7)
    d0 = np.hypot(*np.diff(t.strokes[0], axis=0).T)
    d1 = np.hypot(*np.diff(out.strokes[0], axis=0).T)
    np.testing.assert_allclose(d0, d1, atol=1e-12)


# ------------------------------------------------------------- distortions


def test_affine_jitter_example():
    p = AugmentParams(scale_x=0.5, scale_y=-0.5, shift_x=1.0, shift_y=2.0, elastic=0.0)
    out = geo.affine_jitter(traj([(2.0, 2.0)]), p)
    np.testing.assert_allclose(out.strokes[0], [(4.0, 3.0)])


def test_affine_jitter_zero_identity(rng):
    t = random_trajectory(rng)
    out = geo.affine_jitter(t, NO_JITTER)
    np.testing.assert_allclose(out.points(), t.points(), atol=0)


def test_elastic_reads_pre_distortion_coords():
    out = geo.elastic_distort(traj([(0.25, 0.5)]), eps=0.1)
    # x'' uses y' = 0.5, y'' uses x' = 0.25: both sample the original values
    np.testing.assert_allclose(
        out.strokes[0], [(0.25 + 0.1 * np.sin(np.pi), 0.5 + 0.1 * np.sin(np.pi / 2.0))]
    )


def test_elastic_zero_identity(rng):
    t = random_trajectory(rng)
    out = geo.elastic_distort(t, 0.0)
    np.testing.assert_allclose(out.points(), t.points(), atol=0)


def test_apply_augment_composition(rng):
    t = random_trajectory(rng)
    p = AugmentParams(0.1, -0.2, 0.3, 0.0, 0.05)
    direct = geo.apply_augment(t, p)
    manual = geo.elastic_distort(geo.affine_jitter(t, p), p.elastic)
    np.testing.assert_allclose(direct.points(), manual.points(), atol=0)


def test_sample_rotation_bounds(rng):
    draws = [geo.sample_rotation(rng, 0.3) for _ in range(200)]
    assert all(abs(a) <= 0.3 for a in draws)
    assert geo.sample_rotation(rng, 0.0) == 0.0
    assert min(draws) < 0.0 < max(draws)


def test_sample_augment_ranges(rng):
    for _ in range(100):
        p = geo.sample_augment(rng, 0.1, 0.05, 0.02)
        assert abs(p.scale_x) <= 0.1 and abs(p.scale_y) <= 0.1
        assert abs(p.shift_x) <= 0.05 and abs(p.shift_y) <= 0.05
        assert 0.0 <= p.elastic <= 0.02


# ---------------------------------------------------------- hanging normalize


def test_keypoints_modes():
    t = traj([(0.0, 0.0), (2.0, 0.0)], [(0.0, 2.0), (2.0, 2.0)])
    s, c = geo.hanging_keypoints(t, "SC")
    np.testing.assert_allclose(s, (0.0, 0.0))
    np.testing.assert_allclose(c, (1.0, 1.0))
    s, c = geo.hanging_keypoints(t, "SE")
    np.testing.assert_allclose(s, (0.0, 0.0))
    np.testing.assert_allclose(c, (2.0, 2.0))
    s, c = geo.hanging_keypoints(t, "ASE")
    np.testing.assert_allclose(s, (0.0, 1.0))
    np.testing.assert_allclose(c, (2.0, 1.0))


def test_keypoints_unknown_mode():
    with pytest.raises(ValueError):
        geo.hanging_keypoints(traj([(0.0, 0.0), (1.0, 0.0)]), "XY")


def test_hanging_already_vertical():
    # C is straight below S: nothing to do beyond anchoring S at the origin
    t = traj([(0.0, 0.0), (0.0, -2.0)])
    out = geo.hanging_normalize(t, "SC")
    np.testing.assert_allclose(out.strokes[0], [(0.0, 0.0), (0.0, -2.0)], atol=1e-12)


def test_hanging_horizontal_stroke():
    # centroid to the right of S swings down below it
    t = traj([(0.0, 0.0), (2.0, 0.0)])
    out = geo.hanging_normalize(t, "SC")
    np.testing.assert_allclose(out.strokes[0], [(0.0, 0.0), (0.0, -2.0)], atol=1e-12)


def test_hanging_postconditions(rng):
    for _ in range(100):
        t = random_trajectory(rng)
        out = geo.hanging_normalize(t, "SC")
        s, c = geo.hanging_keypoints(out, "SC")
        np.testing.assert_allclose(s, (0.0, 0.0), atol=1e-9)
        assert abs(c[0] - s[0]) <= 1e-9
        assert c[1] < s[1]


def test_hanging_rotation_invariance(rng):
    for _ in range(100):
        t = random_trajectory(rng)
        alpha = float(rng.uniform(-np.pi, np.pi))
        a = geo.hanging_normalize(t, "SC")
        b = geo.hanging_normalize(geo.rotate(t, alpha), "SC")
        np.testing.assert_allclose(b.points(), a.points(), atol=1e-9)


def test_hanging_is_isometry(rng):
    t = random_trajectory(rng, n_strokes=1)
    out = geo.hanging_normalize(t, "SC")
    d0 = np.hypot(*np.diff(t.strokes[0], axis=0).T)
    d1 = np.hypot(*np.diff(out.strokes[0], axis=0).T)
    np.testing.assert_allclose(d0, d1, atol=1e-9)


def test_hanging_degenerate_keypoints():
    # a symmetric cross has its centroid exactly on the first point
    t = traj([(-1.0, 0.0), (1.0, 0.0)], [(0.0, -1.0), (0.0, 1.0)])
    s, c = geo.hanging_keypoints(t, "SC")
    assert np.hypot(*(c - s)) > 1e-9  # S is the stroke start, not the center
    closed = traj([(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (-1.0, 1.0), (-1.0, -1.0), (1.0, -1.0), (1.0, 0.0), (0.0, 0.0)])
    sc = geo.hanging_keypoints(closed, "SE")
    assert np.hypot(*(sc[1] - sc[0])) <= 1e-9
    with pytest.raises(DegenerateKeypoints):
        geo.hanging_normalize(closed, "SE")


def test_hanging_modes_differ():
    t = traj([(0.0, 0.0), (1.0, 0.0)], [(1.0, 1.0), (3.0, 0.5)])
    outs = {m: geo.hanging_normalize(t, m).points() for m in geo.HANGING_MODES}
    assert not np.allclose(outs["SC"], outs["SE"])
    assert not np.allclose(outs["SC"], outs["ASE"])


def test_hanging_invariance_all_modes(rng):
    for mode in geo.HANGING_MODES:
        t = random_trajectory(rng)
        alpha = float(rng.uniform(-np.pi, np.pi))
        a = geo.hanging_normalize(t, mode)
        b = geo.hanging_normalize(geo.rotate(t, alpha), mode)
        np.testing.assert_allclose(b.points(), a.points(), atol=1e-9)
