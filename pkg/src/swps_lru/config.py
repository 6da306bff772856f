"""Run configuration: nested dataclasses, JSON files, dotted overrides.

A run is fully described by one :class:`RunConfig`.  Files hold a JSON
object mirroring the dataclass nesting; ``--set key.path=value`` overrides
individual leaves (values parsed as JSON, falling back to plain strings).
All field problems are collected and raised together as ConfigError.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field

from .errors import ConfigError
from .geometry import HANGING_MODES
from .preprocess import PreprocessConfig
from .signature import WindowSpec
from .train import TrainConfig


@dataclass
class AugmentConfig:
    """Random per-presentation distortion of training trajectories."""

    enabled: bool = False
    scale: float = 0.1
    translate: float = 0.05
    elastic: float = 0.05


@dataclass
class GeometryConfig:
    """Rotation, orientation normalization, and augmentation settings."""

    rotation_max: float = 0.0  # radians; 0 disables rotation draws
    hanging: bool = True
    hanging_mode: str = "SC"
    augment: AugmentConfig = field(default_factory=AugmentConfig)


@dataclass
class ModelConfig:
    """Network shape and recurrence initialisation ranges."""

    hidden: int = 256
    state_dim: int = 256
    blocks: int = 4
    r_min: float = 0.5
    r_max: float = 0.99
    max_phase: float = 2.0 * math.pi


@dataclass
class GridConfig:
    """Test-time rotation grid (angles k * step_deg for k < count)."""

    count: int = 30
    step_deg: float = 12.0

    @property
    def step_radians(self) -> float:
        return math.radians(self.step_deg)


@dataclass
class DataConfig:
    """Where samples come from; with no path they are synthesized."""

    path: str | None = None
    format: str = "text"  # "text" | "binary"
    n_classes: int = 10
    n_per_class: int = 20
    noise: float = 2.0
    train_fraction: float = 0.8


@dataclass
class RunConfig:
    """Everything one run needs, nested by stage."""

    seed: int = 0
    output_dir: str = "runs"
    data: DataConfig = field(default_factory=DataConfig)
    preprocess: PreprocessConfig = field(default_factory=PreprocessConfig)
    geometry: GeometryConfig = field(default_factory=GeometryConfig)
    window: WindowSpec = field(default_factory=WindowSpec)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    grid: GridConfig = field(default_factory=GridConfig)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


_NESTED = {
    RunConfig: {
        "data": DataConfig,
        "preprocess": PreprocessConfig,
        "geometry": GeometryConfig,
        "window": WindowSpec,
        "model": ModelConfig,
        "train": TrainConfig,
        "grid": GridConfig,
    },
    GeometryConfig: {"augment": AugmentConfig},
}


def _build(cls, data, path, errors):
    if not isinstance(data, dict):
        errors.append(f"{path.rstrip('.') or cls.__name__}: expected an object, got {type(data).__name__}")
        return None
    known = {f.name for f in dataclasses.fields(cls)}
    nested = _NESTED.get(cls, {})
    kwargs = {}
    for key, value in data.items():
        if key not in known:
            errors.append(f"{path}{key}: unknown field")
        elif key in nested:
            sub = _build(nested[key], value, f"{path}{key}.", errors)
            if sub is not None:
                kwargs[key] = sub
        else:
            kwargs[key] = value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        errors.append(f"{path.rstrip('.') or cls.__name__}: {exc}")
        return None


def config_from_dict(data: dict) -> RunConfig:
    """Build and validate a RunConfig from a plain nested dict."""
    errors = []
    cfg = _build(RunConfig, data, "", errors)
    if errors:
        raise ConfigError(errors)
    validate(cfg)
    return cfg


def apply_overrides(data: dict, assignments) -> dict:
    """Apply ``key.path=value`` assignments to a nested dict, in place."""
    errors = []
    for item in assignments:
        key, sep, raw = item.partition("=")
        if not sep or not key:
            errors.append(f"override {item!r}: expected key.path=value")
            continue
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = data
        parts = key.split(".")
        ok = True
        for p in parts[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                errors.append(f"override {key}: {p} is not a section")
                ok = False
                break
        if ok:
            node[parts[-1]] = value
    if errors:
        raise ConfigError(errors)
    return data


def load_config(path=None, overrides=()) -> RunConfig:
    """Load JSON config (defaults when path is None), apply overrides."""
    data = {}
    if path is not None:
        try:
            with open(path) as fh:
                data = json.load(fh)
        except OSError as exc:
            raise ConfigError([f"config file {path}: {exc}"]) from exc
        except json.JSONDecodeError as exc:
            raise ConfigError([f"config file {path}: invalid JSON ({exc})"]) from exc
        if not isinstance(data, dict):
            raise ConfigError([f"config file {path}: top level must be an object"])
    if overrides:
        apply_overrides(data, overrides)
    return config_from_dict(data)


def save_config(cfg: RunConfig, path):
    with open(path, "w") as fh:
        json.dump(cfg.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def validate(cfg: RunConfig):
    """Whole-config checks beyond per-dataclass construction rules."""
    errors = []

    def need(cond, path, msg):
        if not cond:
            errors.append(f"{path}: {msg}")

    g = cfg.geometry
    need(g.hanging_mode in HANGING_MODES, "geometry.hanging_mode", f"must be one of {HANGING_MODES}, got {g.hanging_mode!r}")
    need(g.rotation_max >= 0.0, "geometry.rotation_max", f"must be >= 0, got {g.rotation_max}")
    for name in ("scale", "translate", "elastic"):
        v = getattr(g.augment, name)
        need(v >= 0.0, f"geometry.augment.{name}", f"must be >= 0, got {v}")

    m = cfg.model
    need(m.hidden >= 1, "model.hidden", f"must be >= 1, got {m.hidden}")
    need(m.state_dim >= 1, "model.state_dim", f"must be >= 1, got {m.state_dim}")
    need(m.blocks >= 1, "model.blocks", f"must be >= 1, got {m.blocks}")
    need(0.0 <= m.r_min < m.r_max < 1.0, "model.r_min", f"need 0 <= r_min < r_max < 1, got ({m.r_min}, {m.r_max})")
    need(0.0 < m.max_phase <= 2.0 * math.pi + 1e-12, "model.max_phase", f"must be in (0, 2*pi], got {m.max_phase}")

    need(cfg.grid.count >= 1, "grid.count", f"must be >= 1, got {cfg.grid.count}")
    need(cfg.grid.step_deg > 0.0, "grid.step_deg", f"must be > 0, got {cfg.grid.step_deg}")

    d = cfg.data
    need(d.format in ("text", "binary"), "data.format", f"must be 'text' or 'binary', got {d.format!r}")
    need(d.n_classes >= 1, "data.n_classes", f"must be >= 1, got {d.n_classes}")
    need(d.n_per_class >= 1, "data.n_per_class", f"must be >= 1, got {d.n_per_class}")
    need(d.noise >= 0.0, "data.noise", f"must be >= 0, got {d.noise}")
    need(0.0 < d.train_fraction < 1.0, "data.train_fraction", f"must be in (0, 1), got {d.train_fraction}")

    need(
        cfg.preprocess.target_length >= cfg.window.w,
        "preprocess.target_length",
        f"must be >= window.w so at least one window exists, got {cfg.preprocess.target_length} < {cfg.window.w}",
    )

    if errors:
        raise ConfigError(errors)
