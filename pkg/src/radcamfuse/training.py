"""Seeded training loop, batch pipeline and model construction from checkpoints."""
from __future__ import annotations

import json
import logging
import queue
import threading
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .config import RunConfig
from .datamodel import encode_detection_targets
from .errors import EmptyDataset, NumericError
from .frame_io import FrameDataset
from .losses import detection_loss, kl_divergence, mtl_loss, segmentation_loss
from .nn import FusionNet, ModelConfig
from .nn.layers import rearrange_complex
from .synth import Geometry

log = logging.getLogger(__name__)


@dataclass
class Batch:
    frame_ids: list
    rd: torch.Tensor
    image: torch.Tensor
    cls: torch.Tensor
    reg: torch.Tensor
    seg: torch.Tensor


def collate(samples, det_grid, dilation: int = 0) -> Batch:
    targets = [encode_detection_targets(s.labels, det_grid, dilation) for s in samples]
    return Batch(
        frame_ids=[s.frame_id for s in samples],
        rd=torch.stack([rearrange_complex(np.array(s.rd.data)) for s in samples]),
        image=torch.stack([torch.from_numpy(np.array(s.camera.image)) for s in samples]),
        cls=torch.stack([torch.from_numpy(np.array(t.cls_map)) for t in targets]),
        reg=torch.stack([torch.from_numpy(np.array(t.reg_map)) for t in targets]),
        seg=torch.stack([torch.from_numpy(np.array(s.freespace.mask, dtype=np.float32))
                         for s in samples]),
    )


def epoch_batches(n: int, batch_size: int, seed: int, epoch: int) -> list[list[int]]:
    """Frame order for one epoch; depends only on (seed, epoch)."""
    perm = np.random.default_rng([seed, epoch]).permutation(n)
    return [perm[i:i + batch_size].tolist() for i in range(0, n, batch_size)]


class BatchLoader:
    """Yields collated batches in the given order. With ``prefetch > 0`` a producer
    thread reads ahead into a bounded queue; the order is unchanged."""

    def __init__(self, dataset: FrameDataset, batches, prefetch: int = 0, dilation: int = 0):
        self.dataset, self.batches = dataset, batches
        self.prefetch, self.dilation = prefetch, dilation

    def _load(self, idx):
        return collate([self.dataset[i] for i in idx], self.dataset.detection_grid, self.dilation)

    def __iter__(self):
        if self.prefetch <= 0:
            for idx in self.batches:
                yield self._load(idx)
            return
        q: queue.Queue = queue.Queue(maxsize=self.prefetch)
        stop = threading.Event()

        def produce():
            try:
                for idx in self.batches:
                    if stop.is_set():
                        return
                    q.put(self._load(idx))
                q.put(None)
            except BaseException as e:  # surfaced in the consumer
                q.put(e)

        t = threading.Thread(target=produce, daemon=True)
        t.start()
        try:
            while True:
                item = q.get()
                if item is None:
                    return
                if isinstance(item, BaseException):
                    raise item
                yield item
        finally:
            stop.set()
            while t.is_alive():
                try:
                    q.get_nowait()
                except queue.Empty:
                    t.join(0.05)


def compute_losses(out: dict, batch: Batch, cfg: RunConfig):
    l_det = l_seg = None
    if "cls" in out:
        l_det = detection_loss(out["cls"], out["reg"], batch.cls, batch.reg, alpha=cfg.alpha,
                               gamma=cfg.focal_gamma, focal_alpha=cfg.focal_alpha)
    if "seg" in out:
        l_seg = segmentation_loss(out["seg"], batch.seg)
    losses = mtl_loss(l_det, l_seg, beta=cfg.beta, alpha=cfg.alpha)
    if cfg.kl_weight > 0 and "mu" in out:
        losses.l_mtl = losses.l_mtl + cfg.kl_weight * kl_divergence(out["mu"], out["log_var"])
    return losses


def geometry_of(dataset: FrameDataset) -> Geometry:
    return Geometry.from_dict(dataset.generation["geometry"])


def build_model(model_cfg: ModelConfig, seed: int) -> FusionNet:
    torch.manual_seed(seed)
    return FusionNet(model_cfg, seed=seed)


def model_from_checkpoint(ckpt: Checkpoint) -> FusionNet:
    cfg = ModelConfig.from_dict(ckpt.model_config)
    model = FusionNet(cfg, seed=ckpt.run_config.get("seed", 0))
    model.load_state_dict(ckpt.model_state)
    model.eval()
    return model


def _snapshot(model, opt, cfg, model_cfg, geometry, step, epoch, batch_in_epoch) -> Checkpoint:
    return Checkpoint(
        model_state={k: v.detach().clone() for k, v in model.state_dict().items()},
        optimizer_state=opt.state_dict(),
        run_config=cfg.model_dump(mode="json"),
        model_config=model_cfg.to_dict(),
        geometry=geometry.to_dict(),
        step=step, epoch=epoch, batch_in_epoch=batch_in_epoch,
    )


@dataclass
class TrainResult:
    checkpoint: Path
    log_path: Path
    records: list


def train(cfg: RunConfig, dataset_root, out_dir, resume=None, split: str = "train") -> TrainResult:
    """Minimize the multi-task loss with Adam. Writes ``train_log.jsonl`` (one record per
    optimizer step) and ``last.rck`` plus per-epoch checkpoints into ``out_dir``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ds = FrameDataset(dataset_root, split)
    if len(ds) == 0:
        raise EmptyDataset(f"split {split!r} is empty")
    geometry = geometry_of(ds)
    model_cfg = cfg.model_config_for(geometry)
    model = build_model(model_cfg, cfg.seed)
    opt = torch.optim.Adam(model.parameters(), lr=cfg.lr)

    step, start_epoch, skip = 0, 0, 0
    if resume is not None:
        ck = load_checkpoint(resume)
        model.load_state_dict(ck.model_state)
        if ck.optimizer_state is not None:
            opt.load_state_dict(ck.optimizer_state)
        step, start_epoch, skip = ck.step, ck.epoch, ck.batch_in_epoch

    log_path = out_dir / "train_log.jsonl"
    records = []
    last_good = Path(resume) if resume is not None else None
    last_path = out_dir / "last.rck"
    n_batches = -(-len(ds) // cfg.batch_size)
    done = cfg.max_steps is not None and step >= cfg.max_steps
    epoch = start_epoch
    with open(log_path, "a") as logf:
        for epoch in range(start_epoch, cfg.epochs):
            if done:
                break
            lr = cfg.lr_at(epoch)
            for g in opt.param_groups:
                g["lr"] = lr
            model.train()
            batches = epoch_batches(len(ds), cfg.batch_size, cfg.seed, epoch)[skip:]
            for bi, batch in enumerate(BatchLoader(ds, batches, cfg.prefetch, cfg.target_dilation),
                                       start=skip):
                model.seed_latent(int(np.random.SeedSequence([cfg.seed, step]).generate_state(1)[0]))
                out = model(batch.rd, batch.image)
                losses = compute_losses(out, batch, cfg)
                if not torch.isfinite(torch.as_tensor(losses.l_mtl)):
                    raise NumericError(f"non-finite loss at step {step + 1}; last good checkpoint: "
                                       f"{last_good}")
                opt.zero_grad(set_to_none=True)
                losses.l_mtl.backward()
                opt.step()
                step += 1
                rec = {"epoch": epoch, "step": step, **losses.as_floats(), "lr": lr}
                records.append(rec)
                logf.write(json.dumps(rec) + "\n")
                logf.flush()
                if cfg.max_steps is not None and step >= cfg.max_steps:
                    done = True
                    partial = bi + 1 < n_batches
                    ck = _snapshot(model, opt, cfg, model_cfg, geometry, step,
                                   epoch if partial else epoch + 1, bi + 1 if partial else 0)
                    save_checkpoint(ck, last_path)
                    break
            skip = 0
            if done:
                break
            log.info("epoch %d done, step %d, l_mtl %.5f", epoch, step, records[-1]["l_mtl"])
            if (epoch + 1) % cfg.checkpoint_every == 0 or epoch + 1 == cfg.epochs:
                ck = _snapshot(model, opt, cfg, model_cfg, geometry, step, epoch + 1, 0)
                last_good = save_checkpoint(ck, out_dir / f"epoch_{epoch + 1:03d}.rck")
                save_checkpoint(ck, last_path)
    if not last_path.exists():
        save_checkpoint(_snapshot(model, opt, cfg, model_cfg, geometry, step, epoch, 0), last_path)
    return TrainResult(last_path, log_path, records)
