"""On-disk dataset format.

Layout::

    <root>/manifest.json
    <root>/<split>/<id>.rd            RDF1 header + little-endian float32 re/im interleaved
    <root>/<split>/<id>.img.npy       float32 3xHxW camera raster
    <root>/<split>/<id>.labels.json   [{id, range_m, azimuth_deg, doppler_mps}, ...]
    <root>/<split>/<id>.mask          uint8 free-space raster, one byte per cell
"""
from __future__ import annotations

import json
import struct
import threading
from pathlib import Path
from typing import Iterator

import numpy as np

from .datamodel import (CameraFrame, ComplexRDTensor, FrameSample, FreeSpaceMask,
                        PolarGridSpec, VehicleLabel)
from .errors import EmptyDataset, FormatError, NotFound

RD_MAGIC = b"RDF1"
RD_VERSION = 1
_HEADER = struct.Struct("<4sIIII")
MANIFEST_NAME = "manifest.json"
MANIFEST_VERSION = 1


def rd_payload_nbytes(channels: int, range_bins: int, doppler_bins: int) -> int:
    return channels * range_bins * doppler_bins * 2 * 4


def write_rd(path, rd: ComplexRDTensor) -> None:
    c, r, d = rd.shape
    with open(path, "wb") as f:
        f.write(_HEADER.pack(RD_MAGIC, RD_VERSION, c, r, d))
        f.write(rd.data.astype("<c8", copy=False).tobytes())


def read_rd(path) -> ComplexRDTensor:
    path = Path(path)
    if not path.exists():
        raise NotFound(f"no RD file at {path}")
    raw = path.read_bytes()
    if len(raw) < _HEADER.size:
        raise FormatError(f"{path}: truncated header")
    magic, version, c, r, d = _HEADER.unpack_from(raw)
    if magic != RD_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != RD_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    payload = raw[_HEADER.size:]
    if len(payload) != rd_payload_nbytes(c, r, d):
        raise FormatError(f"{path}: payload is {len(payload)} bytes, header says "
                          f"{c}x{r}x{d} ({rd_payload_nbytes(c, r, d)} bytes)")
    data = np.frombuffer(payload, dtype="<c8").reshape(c, r, d).astype(np.complex64)
    return ComplexRDTensor(data)


def write_frame(sample: FrameSample, directory) -> dict:
    """Write one frame into ``directory``; returns its manifest entry."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    stem = f"{sample.frame_id:06d}"
    entry = {
        "frame_id": sample.frame_id,
        "seed": sample.seed,
        "rd": stem + ".rd",
        "image": stem + ".img.npy",
        "labels": stem + ".labels.json",
        "mask": stem + ".mask",
        "mask_shape": list(sample.freespace.mask.shape),
        "n_labels": len(sample.labels),
    }
    write_rd(directory / entry["rd"], sample.rd)
    np.save(directory / entry["image"], sample.camera.image.astype("<f4"), allow_pickle=False)
    (directory / entry["labels"]).write_text(
        json.dumps([lab.to_json() for lab in sample.labels], indent=1))
    (directory / entry["mask"]).write_bytes(sample.freespace.mask.astype(np.uint8).tobytes())
    return entry


def read_frame(directory, entry: dict) -> FrameSample:
    directory = Path(directory)
    for key in ("rd", "image", "labels", "mask"):
        if not (directory / entry[key]).exists():
            raise NotFound(f"missing {key} file {directory / entry[key]}")
    rd = read_rd(directory / entry["rd"])
    image = np.load(directory / entry["image"], allow_pickle=False)
    labels = [VehicleLabel.from_json(d) for d in json.loads((directory / entry["labels"]).read_text())]
    shape = tuple(entry["mask_shape"])
    raw = (directory / entry["mask"]).read_bytes()
    if len(raw) != int(np.prod(shape)):
        raise FormatError(f"mask {entry['mask']} has {len(raw)} bytes, expected shape {shape}")
    mask = np.frombuffer(raw, dtype=np.uint8).reshape(shape)
    return FrameSample(rd=rd, camera=CameraFrame(image), labels=tuple(labels),
                       freespace=FreeSpaceMask(mask), frame_id=int(entry["frame_id"]),
                       seed=int(entry["seed"]))


class ManifestWriter:
    """Collects frame entries per split; safe to call from several generator threads."""

    def __init__(self, root, detection_grid: PolarGridSpec, segmentation_grid: PolarGridSpec,
                 generation: dict | None = None):
        self.root = Path(root)
        self._lock = threading.Lock()
        self.manifest = {
            "version": MANIFEST_VERSION,
            "grids": {"detection": detection_grid.to_dict(),
                      "segmentation": segmentation_grid.to_dict()},
            "generation": generation or {},
            "splits": {},
        }

    def add(self, split: str, sample: FrameSample) -> dict:
        entry = write_frame(sample, self.root / split)
        with self._lock:
            self.manifest["splits"].setdefault(split, []).append(entry)
        return entry

    def close(self) -> Path:
        for entries in self.manifest["splits"].values():
            entries.sort(key=lambda e: e["frame_id"])
        ids = [e["frame_id"] for es in self.manifest["splits"].values() for e in es]
        if len(ids) != len(set(ids)):
            raise FormatError("duplicate frame ids in dataset")
        path = self.root / MANIFEST_NAME
        path.write_text(json.dumps(self.manifest, indent=1, sort_keys=True))
        return path


def load_manifest(root) -> dict:
    path = Path(root) / MANIFEST_NAME
    if not path.exists():
        raise NotFound(f"no manifest at {path}")
    manifest = json.loads(path.read_text())
    if manifest.get("version") != MANIFEST_VERSION:
        raise FormatError(f"unsupported manifest version {manifest.get('version')}")
    return manifest


class FrameDataset:
    """Lazy reader over one split of an on-disk dataset."""

    def __init__(self, root, split: str = "train"):
        self.root = Path(root)
        self.split = split
        self.manifest = load_manifest(root)
        if split not in self.manifest["splits"]:
            raise EmptyDataset(f"split {split!r} not in dataset {root}")
        self.entries = self.manifest["splits"][split]
        grids = self.manifest["grids"]
        self.detection_grid = PolarGridSpec.from_dict(grids["detection"])
        self.segmentation_grid = PolarGridSpec.from_dict(grids["segmentation"])

    def __len__(self) -> int:
        return len(self.entries)

    def __getitem__(self, idx: int) -> FrameSample:
        return read_frame(self.root / self.split, self.entries[idx])

    def __iter__(self) -> Iterator[FrameSample]:
        for i in range(len(self)):
            yield self[i]

    @property
    def generation(self) -> dict:
        return self.manifest.get("generation", {})
