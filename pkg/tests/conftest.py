"""Shared builders for the test suite.

Most tests want a configuration that is shaped like the real one but small
enough to run in milliseconds; ``tiny_config`` is that.  Backend-sensitive
tests use the ``numpy_backend``/``restore_backend`` fixtures so a failure
in one test cannot leak a backend switch into the next.
"""

import numpy as np
import pytest

from swps_lru import config, kernels
from swps_lru.preprocess import PreprocessConfig
from swps_lru.signature import WindowSpec
from swps_lru.train import TrainConfig
from swps_lru.types import RawSample, Trajectory


def tiny_config(
    seed=0,
    target_length=32,
    w=4,
    t=2,
    m=2,
    hidden=16,
    state_dim=12,
    blocks=2,
    epochs=2,
    batch_size=8,
    dropout=0.0,
    hanging=True,
    rotation_max=0.0,
    **train_kw,
):
    """A full RunConfig scaled down for unit tests."""
    cfg = config.RunConfig(seed=seed)
    cfg.preprocess = PreprocessConfig(resample_spacing=0.05, target_length=target_length)
    cfg.window = WindowSpec(w=w, t=t, m=m)
    cfg.model = config.ModelConfig(hidden=hidden, state_dim=state_dim, blocks=blocks)
    cfg.train = TrainConfig(
        epochs=epochs, batch_size=batch_size, dropout=dropout, **train_kw
    )
    cfg.geometry = config.GeometryConfig(rotation_max=rotation_max, hanging=hanging)
    return cfg


def traj(*strokes):
    return Trajectory([np.asarray(s, dtype=np.float64) for s in strokes])


def sample(tag, *strokes):
    return RawSample(tag, [np.asarray(s, dtype=np.float64) for s in strokes])


def random_trajectory(rng, n_strokes=None, lo=4, hi=12, scale=10.0):
    """A random multi-stroke polyline; every stroke has at least two points."""
    n_strokes = n_strokes or int(rng.integers(1, 4))
    strokes = []
    for _ in range(n_strokes):
        n = int(rng.integers(lo, hi + 1))
        strokes.append(rng.normal(scale=scale, size=(n, 2)))
    return Trajectory(strokes)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def numpy_backend():
    """Force the portable backend for the duration of one test."""
    prev = kernels.backend()
    kernels.set_backend("numpy")
    yield
    kernels.set_backend(prev)


@pytest.fixture
def restore_backend():
    """Let the test switch backends freely; undo afterwards."""
    prev = kernels.backend()
    yield
    kernels.set_backend(prev)
