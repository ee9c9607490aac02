"""Flat ``key = value`` run configuration.

Format: one ``key = value`` per line; ``#`` starts a comment; vectors are
comma separated; booleans are ``true``/``false``.  Unknown keys are errors.

Example::

    grid_origin = 0, -40, -3
    voxel_size = 0.4, 0.4, 0.4
    grid_dims = 160, 200, 16
    query_n = 64
    query_x_first = 0
    query_x_last = 64.8
    # query_sigma defaults to twice the grid spacing
    rotation_range = -0.7853981633974483, 0.7853981633974483
    flip = false
    seed = 0
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field, fields
from pathlib import Path

from .encoding import GaussianEncoder
from .voxelgrid import VoxelGrid


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    # x stops at 64 m so every camera depth stays inside the query grid
    grid_origin: tuple = (0.0, -40.0, -3.0)
    voxel_size: tuple = (0.4, 0.4, 0.4)
    grid_dims: tuple = (160, 200, 16)
    query_n: int = 64
    query_x_first: float = 0.0
    query_x_last: float = 64.8
    query_sigma: float | None = None
    orientation_n: int = 64
    orientation_x_first: float = -0.9
    orientation_x_last: float = 0.9
    orientation_sigma: float | None = None
    rotation_range: tuple = (-math.pi / 4, math.pi / 4)
    flip: bool = False
    seed: int = 0
    sensor_height: float = 0.0
    image_height: int = 352
    image_width: int = 1248
    feature_stride: int = 4
    camera: str = "left"
    normalize: str = "none"
    threads: int = 1
    paths: dict = field(default_factory=dict)

    def validate(self) -> "RunConfig":
        try:
            self.grid()
            self.query_encoder()
            self.orientation_encoder()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        lo, hi = self.rotation_range
        if not lo <= hi:
            raise ConfigError("rotation_range must be (low, high) with low <= high")
        if self.camera not in ("left", "right"):
            raise ConfigError("camera must be left or right")
        if self.normalize not in ("none", "softmax"):
            raise ConfigError("normalize must be none or softmax")
        if self.threads < 1 or self.feature_stride < 1 or self.image_height < 1 or self.image_width < 1:
            raise ConfigError("threads, feature_stride and image size must be positive")
        return self

    def grid(self) -> VoxelGrid:
        return VoxelGrid(self.grid_origin, self.voxel_size, self.grid_dims)

    def query_encoder(self) -> GaussianEncoder:
        return GaussianEncoder(self.query_n, self.query_x_first, self.query_x_last, self.query_sigma)

    def orientation_encoder(self) -> GaussianEncoder:
        return GaussianEncoder(self.orientation_n, self.orientation_x_first, self.orientation_x_last,
                               self.orientation_sigma)


def _convert(raw: str, default, name: str):
    raw = raw.strip()
    if isinstance(default, bool):
        if raw.lower() not in ("true", "false"):
            raise ConfigError(f"{name}: expected true or false, got {raw!r}")
        return raw.lower() == "true"
    if isinstance(default, tuple):
        kind = int if all(isinstance(v, int) for v in default) else float
        return tuple(kind(v) for v in raw.split(","))
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float) or default is None:
        return None if raw.lower() == "none" else float(raw)
    return raw


def parse_config(text: str) -> RunConfig:
    cfg = RunConfig()
    known = {f.name: f for f in fields(RunConfig)}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        if key.startswith("path."):
            cfg.paths[key[5:]] = value.strip()
            continue
        if key not in known or key == "paths":
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        try:
            setattr(cfg, key, _convert(value, getattr(cfg, key), key))
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: {key}: {exc}") from None
    return cfg.validate()


def load_config(path) -> RunConfig:
    return parse_config(Path(path).read_text())


def format_config(cfg: RunConfig) -> str:
    lines = []
    for key, value in dataclasses.asdict(cfg).items():
        if key == "paths":
            lines += [f"path.{k} = {v}" for k, v in value.items()]
        elif isinstance(value, (tuple, list)):
            lines.append(f"{key} = {', '.join(repr(v) for v in value)}")
        elif isinstance(value, bool):
            lines.append(f"{key} = {str(value).lower()}")
        else:
            lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"
