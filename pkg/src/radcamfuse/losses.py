"""Detection, segmentation and multi-task losses.

All losses consume probabilities (sigmoid already applied) and clamp them to
[EPS, 1 - EPS] before taking logs. Reductions: ``"mean"`` (default) averages
per sample and then over the batch; ``"sum"`` adds everything up; ``"none"``
returns one value per sample.
"""
from __future__ import annotations

from dataclasses import dataclass

import torch

from .errors import NumericError, ShapeError

EPS = 1e-7
ALPHA = 100.0
BETA = 100.0
FOCAL_GAMMA = 2.0
FOCAL_ALPHA = 0.25


def _as_batch(t: torch.Tensor) -> torch.Tensor:
    return t[None] if t.dim() == 3 else t


def _reduce(per_sample: torch.Tensor, total: torch.Tensor, reduction: str):
    if reduction == "mean":
        return per_sample.mean()
    if reduction == "sum":
        return total
    if reduction == "none":
        return per_sample
    raise ValueError(f"unknown reduction {reduction!r}")


def _check(pred, target):
    if pred.shape != target.shape:
        raise ShapeError(f"prediction {tuple(pred.shape)} vs target {tuple(target.shape)}")


def focal_loss(pred, target, gamma: float = FOCAL_GAMMA, alpha: float = FOCAL_ALPHA,
               reduction: str = "mean"):
    _check(pred, target)
    p = _as_batch(pred).clamp(EPS, 1 - EPS)
    t = _as_batch(target).to(p.dtype)
    per_px = (-alpha * t * (1 - p) ** gamma * torch.log(p)
              - (1 - alpha) * (1 - t) * p ** gamma * torch.log(1 - p))
    flat = per_px.flatten(1)
    return _reduce(flat.mean(1), flat.sum(), reduction)


def smooth_l1(pred_reg, target_reg, positive_mask, beta: float = 1.0, reduction: str = "mean"):
    """Smooth-L1 summed over regression channels and averaged over positive cells."""
    _check(pred_reg, target_reg)
    x = _as_batch(pred_reg) - _as_batch(target_reg)
    ax = x.abs()
    elem = torch.where(ax < beta, 0.5 * x ** 2 / beta, ax - 0.5 * beta)
    mask = _as_batch(positive_mask).to(elem.dtype)
    if mask.shape[1] != 1:
        raise ShapeError(f"positive mask must have one channel, got {tuple(mask.shape)}")
    per_cell = elem.sum(1, keepdim=True) * mask
    total = per_cell.flatten(1).sum(1)
    n_pos = mask.flatten(1).sum(1)
    per_sample = total / n_pos.clamp(min=1)
    return _reduce(per_sample, total.sum(), reduction)


def detection_loss(pred_cls, pred_reg, target_cls, target_reg, alpha: float = ALPHA,
                   gamma: float = FOCAL_GAMMA, focal_alpha: float = FOCAL_ALPHA,
                   reduction: str = "mean"):
    positives = _as_batch(target_cls) >= 0.5
    return (focal_loss(pred_cls, target_cls, gamma, focal_alpha, reduction)
            + alpha * smooth_l1(pred_reg, target_reg, positives, reduction=reduction))


def segmentation_loss(pred, target, reduction: str = "mean"):
    """Pixelwise binary cross-entropy over the whole output grid."""
    _check(pred, target)
    p = _as_batch(pred).clamp(EPS, 1 - EPS)
    t = _as_batch(target).to(p.dtype)
    per_px = -(t * torch.log(p) + (1 - t) * torch.log(1 - p))
    flat = per_px.flatten(1)
    return _reduce(flat.mean(1), flat.sum(), reduction)


def kl_divergence(mu, log_var):
    """KL(N(mu, sigma^2) || N(0, 1)) summed over latent dims, averaged over the batch."""
    return (-0.5 * (1 + log_var - mu ** 2 - log_var.exp()).sum(-1)).mean()


@dataclass
class LossBreakdown:
    l_det: object
    l_seg: object
    l_mtl: object
    alpha: float = ALPHA
    beta: float = BETA

    def as_floats(self) -> dict:
        return {k: float(torch.as_tensor(getattr(self, k)).detach()) for k in ("l_det", "l_seg", "l_mtl")}


def mtl_loss(l_det=None, l_seg=None, beta: float = BETA, alpha: float = ALPHA) -> LossBreakdown:
    """l_mtl = l_det + beta * l_seg. A task that is not trained is passed as None (counts as 0)."""
    for name, v in (("l_det", l_det), ("l_seg", l_seg)):
        if v is not None and float(torch.as_tensor(v).detach()) < 0:
            raise NumericError(f"{name} is negative ({float(v)})")
    l_det = 0.0 if l_det is None else l_det
    l_seg = 0.0 if l_seg is None else l_seg
    return LossBreakdown(l_det, l_seg, l_det + beta * l_seg, alpha, beta)
