"""Synthetic frames: MIMO range-Doppler cube, pinhole camera render, free-space mask."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from PIL import Image, ImageDraw

from .datamodel import (DETECTION_GRID, SEGMENTATION_GRID, CameraFrame, ComplexRDTensor,
                        FrameSample, FreeSpaceMask, PolarGridSpec, VehicleLabel, polar_to_cartesian)
from .errors import ConfigError, InvalidTxIndex, OutOfGrid

VEHICLE_LENGTH = 4.0
VEHICLE_WIDTH = 1.8
VEHICLE_HEIGHT = 1.5


@dataclass(frozen=True)
class RadarConfig:
    n_tx: int = 12
    n_rx: int = 16
    d_max: int = 256
    delta: int = 16
    rx_spacing: float = 0.5  # wavelengths
    noise_sigma: float = 0.05
    range_bins: int = 512
    range_res: float = 0.2  # m per range bin
    doppler_res: float = 0.1  # m/s per Doppler bin
    rng_seed: int = 0

    def __post_init__(self):
        if self.n_tx <= 0 or self.n_rx <= 0:
            raise ConfigError("antenna counts must be positive")
        if not 0 < self.delta < self.d_max:
            raise ConfigError(f"Doppler shift {self.delta} must lie in (0, {self.d_max})")


@dataclass(frozen=True)
class CameraIntrinsics:
    height: int = 270
    width: int = 480
    fx: float = 240.0
    fy: float = 240.0
    cx: float = 240.0
    cy: float = 135.0
    mount_height: float = 1.5  # m above the road


@dataclass(frozen=True)
class SceneConfig:
    n_targets: tuple[int, int] = (1, 4)
    range_bounds: tuple[float, float] = (6.0, 50.0)
    azimuth_bounds: tuple[float, float] = (-30.0, 30.0)
    doppler_bounds: tuple[float, float] = (-10.0, 10.0)
    road_half_width: float = 8.0
    vehicle_length: float = VEHICLE_LENGTH
    vehicle_width: float = VEHICLE_WIDTH


@dataclass(frozen=True)
class Geometry:
    """Tensor shapes and grids shared by the generator and the network."""

    name: str
    radar: RadarConfig
    camera: CameraIntrinsics
    detection_grid: PolarGridSpec
    segmentation_grid: PolarGridSpec
    camera_bev_hw: tuple[int, int]

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "radar": asdict(self.radar),
            "camera": asdict(self.camera),
            "detection_grid": self.detection_grid.to_dict(),
            "segmentation_grid": self.segmentation_grid.to_dict(),
            "camera_bev_hw": list(self.camera_bev_hw),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Geometry":
        return cls(name=d["name"], radar=RadarConfig(**d["radar"]),
                   camera=CameraIntrinsics(**d["camera"]),
                   detection_grid=PolarGridSpec.from_dict(d["detection_grid"]),
                   segmentation_grid=PolarGridSpec.from_dict(d["segmentation_grid"]),
                   camera_bev_hw=tuple(d["camera_bev_hw"]))


CANONICAL = Geometry("canonical", RadarConfig(), CameraIntrinsics(), DETECTION_GRID,
                     SEGMENTATION_GRID, (64, 64))

# Same physical coverage at a fraction of the resolution, for fast runs.
SMALL = Geometry(
    "small",
    RadarConfig(d_max=32, delta=2, range_bins=128, range_res=0.8, doppler_res=0.8),
    CameraIntrinsics(height=54, width=96, fx=48.0, fy=48.0, cx=48.0, cy=27.0),
    PolarGridSpec(32, 56, 3.2, 3.2, -89.6),
    PolarGridSpec(64, 56, 1.6, 90.0 / 56, -45.0),
    (16, 16),
)

PRESETS = {"canonical": CANONICAL, "small": SMALL}


def fold_doppler(d: int, k: int, delta: int, d_max: int, n_tx: int = 12) -> int:
    """Doppler bin at which transmitter k imprints a target seen at bin d (wraps modulo d_max)."""
    if not 1 <= k <= n_tx:
        raise InvalidTxIndex(f"transmitter index {k} outside 1..{n_tx}")
    return (d + k * delta) % d_max


def frame_seed(dataset_seed: int, frame_id: int) -> int:
    return int(np.random.SeedSequence([dataset_seed, frame_id]).generate_state(1)[0])


# -- scene sampling ---------------------------------------------------------

def _footprint(label: VehicleLabel, scene: SceneConfig) -> tuple[float, float, float, float]:
    x, y = polar_to_cartesian(label.range, label.azimuth)
    hw, hl = scene.vehicle_width / 2, scene.vehicle_length / 2
    return (x - hw, x + hw, y - hl, y + hl)


def sample_scene(scene: SceneConfig, geometry: Geometry, rng: np.random.Generator,
                 max_attempts: int = 1000) -> list[VehicleLabel]:
    """Draw non-overlapping vehicles occupying distinct radar range bins."""
    lo, hi = scene.n_targets
    n = int(rng.integers(lo, hi + 1))
    radar = geometry.radar
    labels: list[VehicleLabel] = []
    boxes = []
    used_rows = set()
    attempts = 0
    while len(labels) < n:
        attempts += 1
        if attempts > max_attempts:
            raise ConfigError(f"could not place {n} vehicles in {max_attempts} attempts")
        r = float(rng.uniform(*scene.range_bounds))
        a = float(rng.uniform(*scene.azimuth_bounds))
        v = float(rng.uniform(*scene.doppler_bounds))
        lab = VehicleLabel(range=r, azimuth=a, doppler=v, id=len(labels))
        row = int(r // radar.range_res)
        box = _footprint(lab, scene)
        if row in used_rows:
            continue
        # 0.5 m clearance between footprints
        if any(box[0] < b[1] + 0.5 and b[0] < box[1] + 0.5 and box[2] < b[3] + 0.5
               and b[2] < box[3] + 0.5 for b in boxes):
            continue
        labels.append(lab)
        boxes.append(box)
        used_rows.add(row)
    return labels


# -- radar ------------------------------------------------------------------

def synthesize_rd(labels, radar: RadarConfig, rng: np.random.Generator) -> ComplexRDTensor:
    """Sparse MIMO range-Doppler cube: each target appears at n_tx folded Doppler bins
    of its range row on every receive channel, plus complex Gaussian noise."""
    cube = np.zeros((radar.n_rx, radar.range_bins, radar.d_max), dtype=np.complex128)
    ch = np.arange(radar.n_rx)
    for lab in labels:
        r = int(math.floor(lab.range / radar.range_res))
        if not 0 <= r < radar.range_bins:
            raise OutOfGrid(f"target {lab.id} at {lab.range} m beyond radar range")
        d = int(round(lab.doppler / radar.doppler_res)) % radar.d_max
        amp = rng.uniform(0.5, 1.0)
        phase0 = rng.uniform(0, 2 * np.pi)
        spatial = 2 * np.pi * radar.rx_spacing * math.sin(math.radians(lab.azimuth))
        for k in range(1, radar.n_tx + 1):
            col = fold_doppler(d, k, radar.delta, radar.d_max, radar.n_tx)
            # virtual array element index: Tx k contributes an n_rx-element offset
            virt = (k - 1) * radar.n_rx + ch
            cube[:, r, col] += amp * np.exp(1j * (phase0 + spatial * virt))
    if radar.noise_sigma > 0:
        scale = radar.noise_sigma / math.sqrt(2)
        noise = rng.standard_normal((2,) + cube.shape)
        cube += scale * (noise[0] + 1j * noise[1])
    return ComplexRDTensor(cube.astype(np.complex64))


# -- camera -----------------------------------------------------------------

def _project(cam: CameraIntrinsics, x, y, z):
    """World (x lateral, y forward, z up) -> pixel (u, v)."""
    return cam.cx + cam.fx * x / y, cam.cy + cam.fy * (cam.mount_height - z) / y


def render_camera(labels, scene: SceneConfig, cam: CameraIntrinsics,
                  rng: np.random.Generator) -> CameraFrame:
    h, w = cam.height, cam.width
    rows = np.arange(h, dtype=np.float64)[:, None] + 0.5
    cols = np.arange(w, dtype=np.float64)[None, :] + 0.5
    img = np.empty((h, w, 3), dtype=np.float64)

    sky = np.clip(0.55 + 0.4 * rows / max(cam.cy, 1), 0, 1)
    img[:] = np.stack([sky * 0.75, sky * 0.85, sky], axis=-1)
    below = rows > cam.cy
    depth = np.where(below, cam.fy * cam.mount_height / np.maximum(rows - cam.cy, 1e-6), np.inf)
    lateral = (cols - cam.cx) * depth / cam.fx
    ground = np.broadcast_to(below, (h, w))
    road = ground & (np.abs(lateral) <= scene.road_half_width)
    shade = np.clip(1.0 - depth / 120.0, 0.3, 1.0)
    shade = np.broadcast_to(shade, (h, w))
    img[ground] = np.stack([0.25 * shade, 0.45 * shade, 0.2 * shade], axis=-1)[ground]
    img[road] = np.stack([0.45 * shade, 0.45 * shade, 0.47 * shade], axis=-1)[road]

    canvas = Image.fromarray(np.round(img * 255).astype(np.uint8))
    draw = ImageDraw.Draw(canvas)
    near = 0.5
    for lab in sorted(labels, key=lambda l: -l.range):
        x0, x1, y0, y1 = _footprint(lab, scene)
        if y0 < near:
            continue
        color = tuple(int(c) for c in rng.integers(60, 230, size=3))
        dark = tuple(c // 3 for c in color)
        ground_quad = [_project(cam, x, y, 0.0) for x, y in ((x0, y0), (x1, y0), (x1, y1), (x0, y1))]
        draw.polygon(ground_quad, fill=dark)
        rear = [_project(cam, x0, y0, 0.0), _project(cam, x1, y0, 0.0),
                _project(cam, x1, y0, VEHICLE_HEIGHT), _project(cam, x0, y0, VEHICLE_HEIGHT)]
        draw.polygon(rear, fill=color)
    arr = np.asarray(canvas, dtype=np.float32).transpose(2, 0, 1) / np.float32(255.0)
    return CameraFrame(arr)


# -- free space -------------------------------------------------------------

def rasterize_freespace(labels, grid: PolarGridSpec, road_half_width: float = 8.0,
                        vehicle_length: float = VEHICLE_LENGTH,
                        vehicle_width: float = VEHICLE_WIDTH) -> FreeSpaceMask:
    """Cell is free iff its centre is on the road, outside every footprint and not in
    the radial shadow cast by a footprint."""
    rc = grid.range_centers()[:, None]
    az = np.deg2rad(grid.azimuth_centers())[None, :]
    dx, dy = np.sin(az), np.cos(az)
    x, y = rc * dx, rc * dy
    free = (np.abs(x) <= road_half_width) & (y >= 0)
    hw, hl = vehicle_width / 2, vehicle_length / 2
    for lab in labels:
        cx, cy = polar_to_cartesian(lab.range, lab.azimuth)
        bx0, bx1, by0, by1 = cx - hw, cx + hw, cy - hl, cy + hl
        inside = (x >= bx0) & (x <= bx1) & (y >= by0) & (y <= by1)
        t_enter = _ray_box_entry(dx, dy, bx0, bx1, by0, by1)
        shadow = np.isfinite(t_enter) & (rc > t_enter)
        free &= ~(inside | shadow)
    return FreeSpaceMask(free[None].astype(np.uint8))


def _ray_box_entry(dx, dy, x0, x1, y0, y1):
    """Entry distance of rays from the origin along (dx, dy) into a box; inf on a miss."""
    with np.errstate(divide="ignore", invalid="ignore"):
        tx0, tx1 = x0 / dx, x1 / dx
        ty0, ty1 = y0 / dy, y1 / dy
    txmin = np.where(dx == 0, np.where((x0 <= 0) & (0 <= x1), -np.inf, np.inf), np.minimum(tx0, tx1))
    txmax = np.where(dx == 0, np.where((x0 <= 0) & (0 <= x1), np.inf, -np.inf), np.maximum(tx0, tx1))
    tymin = np.where(dy == 0, np.where((y0 <= 0) & (0 <= y1), -np.inf, np.inf), np.minimum(ty0, ty1))
    tymax = np.where(dy == 0, np.where((y0 <= 0) & (0 <= y1), np.inf, -np.inf), np.maximum(ty0, ty1))
    t_in = np.maximum(np.maximum(txmin, tymin), 0.0)
    t_out = np.minimum(txmax, tymax)
    return np.where(t_in <= t_out, t_in, np.inf)


# -- frame ------------------------------------------------------------------

def synthesize_frame(scene: SceneConfig, geometry: Geometry = CANONICAL, seed: int = 0,
                     frame_id: int = 0, labels=None) -> FrameSample:
    """Build one frame. ``labels`` overrides scene sampling when given."""
    rng = np.random.default_rng(seed)
    if labels is None:
        labels = sample_scene(scene, geometry, rng)
    labels = tuple(labels)
    for lab in labels:
        if not geometry.detection_grid.contains(lab.range, lab.azimuth):
            raise OutOfGrid(f"target {lab.id} at ({lab.range} m, {lab.azimuth} deg) outside grid")
    rd = synthesize_rd(labels, geometry.radar, rng)
    camera = render_camera(labels, scene, geometry.camera, rng)
    freespace = rasterize_freespace(labels, geometry.segmentation_grid, scene.road_half_width,
                                    scene.vehicle_length, scene.vehicle_width)
    return FrameSample(rd=rd, camera=camera, labels=labels, freespace=freespace,
                       frame_id=frame_id, seed=seed)
