from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace

MODES = ("fusion", "camera_only", "radar_only")
TASKS = ("detection", "segmentation", "multitask")


@dataclass(frozen=True)
class ModelConfig:
    """Architecture hyperparameters. Defaults describe the canonical network;
    ``width_mult`` scales every hidden channel width uniformly."""

    mode: str = "fusion"
    tasks: str = "multitask"
    variational: bool = True
    width_mult: float = 1.0

    # input geometry
    rd_channels: int = 16
    rd_range_bins: int = 512
    rd_doppler_bins: int = 256
    n_tx: int = 12
    delta: int = 16
    image_hw: tuple[int, int] = (270, 480)
    det_grid_hw: tuple[int, int] = (128, 224)
    seg_grid_hw: tuple[int, int] = (256, 224)
    camera_bev_hw: tuple[int, int] = (64, 64)

    # radar branch
    mimo_channels: int = 192
    radar_widths: tuple[int, ...] = (48, 64, 96, 128)
    radar_layers: tuple[int, ...] = (3, 6, 6, 3)
    radar_det_channels: int = 128
    radar_seg_channels: int = 64

    # camera branch
    camera_stem: int = 16
    camera_widths: tuple[int, ...] = (32, 64, 128, 96)
    camera_layers: tuple[int, ...] = (3, 6, 6, 3)
    latent_dim: int = 512
    seed_channels: int = 128
    camera_channels: int = 16

    # heads
    det_head_widths: tuple[int, ...] = (96, 96, 96)
    seg_head_widths: tuple[int, ...] = (64, 32)

    def __post_init__(self):
        from ..errors import ConfigError
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.tasks not in TASKS:
            raise ConfigError(f"tasks must be one of {TASKS}, got {self.tasks!r}")
        if self.width_mult <= 0:
            raise ConfigError("width_mult must be positive")

    @property
    def use_radar(self) -> bool:
        return self.mode in ("fusion", "radar_only")

    @property
    def use_camera(self) -> bool:
        return self.mode in ("fusion", "camera_only")

    @property
    def detection(self) -> bool:
        return self.tasks in ("detection", "multitask")

    @property
    def segmentation(self) -> bool:
        return self.tasks in ("segmentation", "multitask")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        for k, v in d.items():
            if isinstance(v, list):
                d[k] = tuple(v)
        return cls(**d)

    def with_(self, **kw) -> "ModelConfig":
        return replace(self, **kw)

    @classmethod
    def from_geometry(cls, geometry, **kw) -> "ModelConfig":
        radar = geometry.radar
        return cls(
            rd_channels=radar.n_rx, rd_range_bins=radar.range_bins,
            rd_doppler_bins=radar.d_max, n_tx=radar.n_tx, delta=radar.delta,
            image_hw=(geometry.camera.height, geometry.camera.width),
            det_grid_hw=geometry.detection_grid.shape,
            seg_grid_hw=geometry.segmentation_grid.shape,
            camera_bev_hw=tuple(geometry.camera_bev_hw), **kw)
