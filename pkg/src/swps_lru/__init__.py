"""Sliding-window path-signature features feeding a linear recurrent classifier."""

from .config import RunConfig, load_config
from .errors import (
    ConfigError,
    DegenerateKeypoints,
    NonFiniteLoss,
    ParseError,
    StructuralError,
    SwpsError,
)
from .signature import WindowSpec, path_signature, sig_dim, sliding_window_signature
from .types import Dataset, RawSample, SplitSpec, Trajectory

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "Dataset",
    "DegenerateKeypoints",
    "NonFiniteLoss",
    "ParseError",
    "RawSample",
    "RunConfig",
    "SplitSpec",
    "StructuralError",
    "SwpsError",
    "Trajectory",
    "WindowSpec",
    "__version__",
    "load_config",
    "path_signature",
    "sig_dim",
    "sliding_window_signature",
]
