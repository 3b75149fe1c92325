"""Core domain types, BEV-polar geometry and label/target-map encoding."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import OutOfGrid, ShapeError

RD_CHANNELS = 16
RD_RANGE_BINS = 512
RD_DOPPLER_BINS = 256
IMAGE_SHAPE = (3, 270, 480)


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class PolarGridSpec:
    """Range x azimuth grid. Bin i covers [min + i*res, min + (i+1)*res)."""

    range_bins: int
    azimuth_bins: int
    range_res: float
    azimuth_res: float
    azimuth_min: float
    range_min: float = 0.0

    def __post_init__(self):
        if self.range_bins <= 0 or self.azimuth_bins <= 0:
            raise ValueError("grid bin counts must be positive")
        if self.range_res <= 0 or self.azimuth_res <= 0:
            raise ValueError("grid resolutions must be positive")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.range_bins, self.azimuth_bins)

    @property
    def range_max(self) -> float:
        return self.range_min + self.range_bins * self.range_res

    @property
    def azimuth_max(self) -> float:
        return self.azimuth_min + self.azimuth_bins * self.azimuth_res

    def contains(self, range_m: float, azimuth_deg: float) -> bool:
        return (self.range_min <= range_m < self.range_max
                and self.azimuth_min <= azimuth_deg < self.azimuth_max)

    def range_bin(self, range_m: float) -> int:
        i = math.floor((range_m - self.range_min) / self.range_res)
        return min(max(i, 0), self.range_bins - 1)

    def azimuth_bin(self, azimuth_deg: float) -> int:
        j = math.floor((azimuth_deg - self.azimuth_min) / self.azimuth_res)
        return min(max(j, 0), self.azimuth_bins - 1)

    def range_center(self, i):
        return self.range_min + (np.asarray(i) + 0.5) * self.range_res

    def azimuth_center(self, j):
        return self.azimuth_min + (np.asarray(j) + 0.5) * self.azimuth_res

    def range_centers(self) -> np.ndarray:
        return self.range_center(np.arange(self.range_bins))

    def azimuth_centers(self) -> np.ndarray:
        return self.azimuth_center(np.arange(self.azimuth_bins))

    def to_dict(self) -> dict:
        return {
            "range_bins": self.range_bins,
            "azimuth_bins": self.azimuth_bins,
            "range_res": self.range_res,
            "azimuth_res": self.azimuth_res,
            "azimuth_min": self.azimuth_min,
            "range_min": self.range_min,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PolarGridSpec":
        return cls(**d)


DETECTION_GRID = PolarGridSpec(128, 224, 0.8, 0.8, -89.6)
SEGMENTATION_GRID = PolarGridSpec(256, 224, 0.4, 90.0 / 224, -45.0)


@dataclass(frozen=True)
class VehicleLabel:
    range: float
    azimuth: float
    doppler: float = 0.0
    id: int = 0

    def to_json(self) -> dict:
        return {"id": self.id, "range_m": self.range,
                "azimuth_deg": self.azimuth, "doppler_mps": self.doppler}

    @classmethod
    def from_json(cls, d: dict) -> "VehicleLabel":
        return cls(range=float(d["range_m"]), azimuth=float(d["azimuth_deg"]),
                   doppler=float(d.get("doppler_mps", 0.0)), id=int(d["id"]))


@dataclass(frozen=True, eq=False)
class DetectionTargets:
    cls_map: np.ndarray  # (1, R, A) in [0, 1]
    reg_map: np.ndarray  # (2, R, A) range / azimuth offsets in bins

    def __post_init__(self):
        if self.cls_map.ndim != 3 or self.cls_map.shape[0] != 1:
            raise ShapeError(f"cls_map must be 1xRxA, got {self.cls_map.shape}")
        if self.reg_map.shape != (2,) + self.cls_map.shape[1:]:
            raise ShapeError(f"reg_map must be 2xRxA, got {self.reg_map.shape}")
        object.__setattr__(self, "cls_map", _frozen(self.cls_map.astype(np.float32)))
        object.__setattr__(self, "reg_map", _frozen(self.reg_map.astype(np.float32)))


@dataclass(frozen=True, eq=False)
class FreeSpaceMask:
    mask: np.ndarray  # (1, R, A) uint8, 1 = drivable

    def __post_init__(self):
        m = np.asarray(self.mask)
        if m.ndim != 3 or m.shape[0] != 1:
            raise ShapeError(f"free-space mask must be 1xRxA, got {m.shape}")
        if not np.isin(m, (0, 1)).all():
            raise ValueError("free-space mask values must be 0 or 1")
        object.__setattr__(self, "mask", _frozen(m.astype(np.uint8)))


@dataclass(frozen=True, eq=False)
class ComplexRDTensor:
    data: np.ndarray  # complex64 (channels, range, doppler)

    def __post_init__(self):
        d = np.asarray(self.data)
        if d.ndim != 3:
            raise ShapeError(f"RD tensor must be channels x range x doppler, got {d.shape}")
        d = d.astype(np.complex64, copy=False)
        if not np.isfinite(d.view(np.float32)).all():
            raise ValueError("RD tensor contains non-finite entries")
        object.__setattr__(self, "data", _frozen(d))

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape


@dataclass(frozen=True, eq=False)
class CameraFrame:
    image: np.ndarray  # float32 (3, H, W) in [0, 1]

    def __post_init__(self):
        img = np.asarray(self.image, dtype=np.float32)
        if img.ndim != 3 or img.shape[0] != 3:
            raise ShapeError(f"camera image must be 3xHxW, got {img.shape}")
        if img.size and (img.min() < 0.0 or img.max() > 1.0):
            raise ValueError("camera image values must lie in [0, 1]")
        object.__setattr__(self, "image", _frozen(img))


@dataclass(frozen=True, eq=False)
class FrameSample:
    rd: ComplexRDTensor
    camera: CameraFrame
    labels: tuple[VehicleLabel, ...]
    freespace: FreeSpaceMask
    frame_id: int
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "labels", tuple(self.labels))

    def equals(self, other: "FrameSample") -> bool:
        """Bitwise equality of every payload."""
        return (self.frame_id == other.frame_id
                and self.seed == other.seed
                and self.labels == other.labels
                and self.rd.data.shape == other.rd.data.shape
                and self.rd.data.tobytes() == other.rd.data.tobytes()
                and self.camera.image.tobytes() == other.camera.image.tobytes()
                and self.camera.image.shape == other.camera.image.shape
                and self.freespace.mask.tobytes() == other.freespace.mask.tobytes()
                and self.freespace.mask.shape == other.freespace.mask.shape)


def polar_to_cartesian(range_m, azimuth_deg):
    """(range, azimuth) -> (x lateral, y forward); azimuth measured from boresight."""
    az = np.deg2rad(azimuth_deg)
    x = range_m * np.sin(az)
    y = range_m * np.cos(az)
    if np.ndim(x) == 0:
        return float(x), float(y)
    return x, y


def encode_detection_targets(labels: Sequence[VehicleLabel], grid: PolarGridSpec = DETECTION_GRID,
                             dilation: int = 0) -> DetectionTargets:
    """Rasterize vehicle labels into classification and regression target maps.

    The regression channels hold (true - bin_center) / res for range and azimuth.
    Two labels in one bin: the nearer one is kept and a warning is emitted.
    """
    cls_map = np.zeros((1,) + grid.shape, dtype=np.float32)
    reg_map = np.zeros((2,) + grid.shape, dtype=np.float32)

    for lab in labels:
        if not grid.contains(lab.range, lab.azimuth):
            raise OutOfGrid(f"label {lab.id} at ({lab.range} m, {lab.azimuth} deg) "
                            f"is outside the grid")

    owner: dict[tuple[int, int], VehicleLabel] = {}
    for lab in labels:
        key = (grid.range_bin(lab.range), grid.azimuth_bin(lab.azimuth))
        prev = owner.get(key)
        if prev is not None:
            keep, drop = (prev, lab) if prev.range <= lab.range else (lab, prev)
            warnings.warn(f"labels {keep.id} and {drop.id} share bin {key}; keeping {keep.id}")
            owner[key] = keep
        else:
            owner[key] = lab

    # far to near so nearer labels win any dilated overlap
    for (i, j), lab in sorted(owner.items(), key=lambda kv: -kv[1].range):
        for di in range(-dilation, dilation + 1):
            for dj in range(-dilation, dilation + 1):
                ii, jj = i + di, j + dj
                if not (0 <= ii < grid.range_bins and 0 <= jj < grid.azimuth_bins):
                    continue
                cls_map[0, ii, jj] = 1.0
                reg_map[0, ii, jj] = (lab.range - grid.range_center(ii)) / grid.range_res
                reg_map[1, ii, jj] = (lab.azimuth - grid.azimuth_center(jj)) / grid.azimuth_res
    return DetectionTargets(cls_map, reg_map)
