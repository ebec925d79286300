"""Flat key=value pipeline configuration with load-time validation."""

from __future__ import annotations

from dataclasses import dataclass, fields
from pathlib import Path
from typing import Union


class ConfigError(ValueError):
    """Invalid configuration file or values."""


@dataclass(frozen=True)
class PipelineConfig:
    """Knobs shared across the CLI pipeline stages.

    patch_size, key_threshold, and the curation knobs are artifact
    defaults; the token budgets, context limit, frame caps, fps, and
    the key:intermediate ratio are the system's operating constants
    (180 frames / 1 fps for training-style runs; inference-style runs
    raise max_frames to 300 and fps up to 3).
    """

    patch_size: int = 16
    t_max: int = 10240
    t_min: int = 16
    context_limit: int = 16384
    fps: float = 1.0
    max_frames: int = 180
    key_threshold: float = 0.15
    ratio: float = 16.0
    seed: int = 0
    # curation stage (artifact defaults)
    k_per_level: int = 4
    depth: int = 2
    sample_fraction: float = 1.0
    select_per_cluster: int = 8
    motion_threshold: float = 0.05
    duration_buckets: int = 8
    duration_quota: int = 64

    def __post_init__(self) -> None:
        if self.patch_size < 1:
            raise ConfigError(f"patch_size must be >= 1, got {self.patch_size}")
        if not (self.t_max >= self.t_min >= 1):
            raise ConfigError(f"need t_max >= t_min >= 1, got {self.t_max}/{self.t_min}")
        if self.context_limit < self.t_max:
            raise ConfigError(
                f"context_limit {self.context_limit} smaller than visual budget t_max {self.t_max}"
            )
        if not self.fps > 0:
            raise ConfigError(f"fps must be positive, got {self.fps}")
        if self.max_frames < 1:
            raise ConfigError(f"max_frames must be >= 1, got {self.max_frames}")
        if self.max_frames * self.t_min > self.t_max:
            # The floor-safety rule: otherwise a maximally long video
            # cannot give every frame its t_min floor.
            raise ConfigError(
                f"max_frames * t_min = {self.max_frames * self.t_min} exceeds "
                f"t_max = {self.t_max}; shrink max_frames or t_min"
            )
        if not 0.0 <= self.key_threshold <= 1.0:
            raise ConfigError(f"key_threshold must be in [0, 1], got {self.key_threshold}")
        if not self.ratio > 0:
            raise ConfigError(f"ratio must be positive, got {self.ratio}")
        if self.k_per_level < 1 or self.depth < 1:
            raise ConfigError("k_per_level and depth must be >= 1")
        if not 0.0 < self.sample_fraction <= 1.0:
            raise ConfigError(f"sample_fraction must be in (0, 1], got {self.sample_fraction}")
        if self.select_per_cluster < 1:
            raise ConfigError("select_per_cluster must be >= 1")
        if self.duration_buckets < 1 or self.duration_quota < 0:
            raise ConfigError("duration_buckets must be >= 1 and duration_quota >= 0")


_FIELD_TYPES = {f.name: f.type for f in fields(PipelineConfig)}


def _coerce(name: str, raw: str):
    kind = _FIELD_TYPES[name]
    try:
        if kind in ("int", int):
            return int(raw)
        return float(raw)
    except ValueError as exc:
        raise ConfigError(f"bad value for {name}: {raw!r}") from exc


def load_config(path: Union[str, Path, None]) -> PipelineConfig:
    """Parse a key=value file ('#' starts a comment); None gives defaults."""
    if path is None:
        return PipelineConfig()
    values = {}
    text = Path(path).read_text(encoding="utf-8")
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        if key not in _FIELD_TYPES:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        values[key] = _coerce(key, raw.strip())
    return PipelineConfig(**values)
