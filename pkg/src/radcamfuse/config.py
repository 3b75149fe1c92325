"""Run configuration: defaults reproduce the reference training setup."""
from __future__ import annotations

import json
from pathlib import Path
from typing import Literal, Optional

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from .errors import ConfigError
from .nn.config import ModelConfig
from .synth import PRESETS, Geometry, SceneConfig


class GenerateConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    preset: Literal["canonical", "small"] = "canonical"
    n_frames: int = Field(100, ge=1)
    split_ratios: dict[str, float] = {"train": 0.70, "val": 0.15, "test": 0.15}
    data_seed: int = 0
    n_targets: tuple[int, int] = (1, 4)
    range_bounds: tuple[float, float] = (6.0, 50.0)
    azimuth_bounds: tuple[float, float] = (-30.0, 30.0)
    doppler_bounds: tuple[float, float] = (-10.0, 10.0)
    road_half_width: float = 8.0
    noise_sigma: float = Field(0.05, ge=0)
    delta: Optional[int] = None
    rx_spacing: Optional[float] = None

    @field_validator("split_ratios")
    @classmethod
    def _ratios(cls, v):
        if not v or any(r < 0 for r in v.values()) or abs(sum(v.values()) - 1) > 1e-6:
            raise ValueError("split ratios must be non-negative and sum to 1")
        return v

    @field_validator("n_targets")
    @classmethod
    def _targets(cls, v):
        if v[0] < 0 or v[1] < v[0]:
            raise ValueError("n_targets must be [min, max] with 0 <= min <= max")
        return v

    def scene(self) -> SceneConfig:
        return SceneConfig(n_targets=tuple(self.n_targets), range_bounds=tuple(self.range_bounds),
                           azimuth_bounds=tuple(self.azimuth_bounds),
                           doppler_bounds=tuple(self.doppler_bounds),
                           road_half_width=self.road_half_width)

    def geometry(self) -> Geometry:
        from dataclasses import replace
        g = PRESETS[self.preset]
        kw = {"noise_sigma": self.noise_sigma, "rng_seed": self.data_seed}
        if self.delta is not None:
            kw["delta"] = self.delta
        if self.rx_spacing is not None:
            kw["rx_spacing"] = self.rx_spacing
        try:
            radar = replace(g.radar, **kw)
        except ValueError as e:
            raise ConfigError(str(e)) from e
        return replace(g, radar=radar)


class RunConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    mode: Literal["fusion", "camera_only", "radar_only"] = "fusion"
    tasks: Literal["detection", "segmentation", "multitask"] = "multitask"
    variational: bool = True
    width_mult: float = Field(1.0, gt=0)

    lr: float = Field(1e-4, gt=0)
    lr_decay: float = Field(0.9, gt=0, le=1)
    lr_decay_every: int = Field(10, ge=1)
    batch_size: int = Field(4, ge=1)
    epochs: int = Field(100, ge=1)
    max_steps: Optional[int] = Field(None, ge=1)
    checkpoint_every: int = Field(1, ge=1)
    prefetch: int = Field(0, ge=0)

    alpha: float = Field(100.0, ge=0)
    beta: float = Field(100.0, ge=0)
    focal_gamma: float = Field(2.0, ge=0)
    focal_alpha: float = Field(0.25, ge=0, le=1)
    kl_weight: float = Field(0.0, ge=0)
    target_dilation: int = Field(0, ge=0)

    seed: int = 0
    conf_threshold: float = Field(0.2, ge=0, le=1)

    dataset: Optional[str] = None
    checkpoint: Optional[str] = None
    out: Optional[str] = None

    generate: GenerateConfig = GenerateConfig()

    def lr_at(self, epoch: int) -> float:
        return self.lr * self.lr_decay ** (epoch // self.lr_decay_every)

    def model_config_for(self, geometry: Geometry) -> ModelConfig:
        return ModelConfig.from_geometry(geometry, mode=self.mode, tasks=self.tasks,
                                         variational=self.variational, width_mult=self.width_mult)


def load_config(path=None, **overrides) -> RunConfig:
    """Read a YAML/JSON config file (unknown keys rejected) and apply non-None overrides."""
    data: dict = {}
    if path is not None:
        text = Path(path).read_text()
        data = (json.loads(text) if str(path).endswith(".json") else yaml.safe_load(text)) or {}
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: top level must be a mapping")
    for k, v in overrides.items():
        if v is not None:
            data[k] = v
    try:
        return RunConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError(str(e)) from e
