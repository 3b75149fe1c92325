"""Versioned checkpoint container.

Layout: ``b"RCKP"`` | u32 version | u64 header length | JSON header | tensor payload.
The header lists every tensor (name, dtype, shape, offset, nbytes) plus the run config,
model config, geometry, optimizer hyperparameters and progress counters. All integers
and tensor data are little-endian; the JSON is written with sorted keys so that
save -> load -> save reproduces the same bytes.
"""
from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .errors import FormatError, NotFound

MAGIC = b"RCKP"
VERSION = 1
_PREFIX = struct.Struct("<4sIQ")


@dataclass
class Checkpoint:
    model_state: dict            # name -> tensor (parameters and buffers)
    optimizer_state: dict | None = None
    run_config: dict = field(default_factory=dict)
    model_config: dict = field(default_factory=dict)
    geometry: dict = field(default_factory=dict)
    step: int = 0
    epoch: int = 0
    batch_in_epoch: int = 0

    def parameter_payload_bytes(self) -> int:
        return sum(t.numel() * t.element_size() for t in self.model_state.values())


def _tensor_items(ckpt: Checkpoint):
    for name, t in ckpt.model_state.items():
        yield "model." + name, t
    if ckpt.optimizer_state is not None:
        for pid in sorted(ckpt.optimizer_state["state"]):
            for key in sorted(ckpt.optimizer_state["state"][pid]):
                yield f"optim.{pid}.{key}", ckpt.optimizer_state["state"][pid][key]


def _to_le_array(t: torch.Tensor) -> np.ndarray:
    a = t.detach().cpu().contiguous().numpy()
    return a.astype(a.dtype.newbyteorder("<"), copy=False)


def save_checkpoint(ckpt: Checkpoint, path) -> Path:
    path = Path(path)
    tensors, blobs, offset = [], [], 0
    for name, t in _tensor_items(ckpt):
        a = _to_le_array(t)
        raw = a.tobytes()
        tensors.append({"name": name, "dtype": a.dtype.str, "shape": list(a.shape),
                        "offset": offset, "nbytes": len(raw)})
        blobs.append(raw)
        offset += len(raw)
    groups = None
    if ckpt.optimizer_state is not None:
        groups = [{k: v for k, v in g.items() if k != "params"} | {"params": list(g["params"])}
                  for g in ckpt.optimizer_state["param_groups"]]
    header = {
        "tensors": tensors,
        "optimizer_param_groups": groups,
        "run_config": ckpt.run_config,
        "model_config": ckpt.model_config,
        "geometry": ckpt.geometry,
        "step": ckpt.step,
        "epoch": ckpt.epoch,
        "batch_in_epoch": ckpt.batch_in_epoch,
    }
    hbytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as f:
        f.write(_PREFIX.pack(MAGIC, VERSION, len(hbytes)))
        f.write(hbytes)
        for raw in blobs:
            f.write(raw)
    os.replace(tmp, path)
    return path


def load_checkpoint(path) -> Checkpoint:
    path = Path(path)
    if not path.exists():
        raise NotFound(f"no checkpoint at {path}")
    raw = path.read_bytes()
    if len(raw) < _PREFIX.size:
        raise FormatError(f"{path}: truncated")
    magic, version, hlen = _PREFIX.unpack_from(raw)
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise FormatError(f"{path}: unsupported checkpoint version {version}")
    header = json.loads(raw[_PREFIX.size:_PREFIX.size + hlen])
    base = _PREFIX.size + hlen
    model_state, optim_state = {}, {}
    for e in header["tensors"]:
        start = base + e["offset"]
        if start + e["nbytes"] > len(raw):
            raise FormatError(f"{path}: tensor {e['name']} runs past end of file")
        a = np.frombuffer(raw, dtype=np.dtype(e["dtype"]), count=int(np.prod(e["shape"], dtype=np.int64)),
                          offset=start).reshape(e["shape"])
        t = torch.from_numpy(a.astype(a.dtype.newbyteorder("="), copy=True))
        kind, rest = e["name"].split(".", 1)
        if kind == "model":
            model_state[rest] = t
        else:
            pid, key = rest.split(".", 1)
            optim_state.setdefault(int(pid), {})[key] = t
    optimizer_state = None
    if header["optimizer_param_groups"] is not None:
        optimizer_state = {"state": optim_state, "param_groups": header["optimizer_param_groups"]}
    return Checkpoint(model_state=model_state, optimizer_state=optimizer_state,
                      run_config=header["run_config"], model_config=header["model_config"],
                      geometry=header["geometry"], step=header["step"], epoch=header["epoch"],
                      batch_in_epoch=header.get("batch_in_epoch", 0))
