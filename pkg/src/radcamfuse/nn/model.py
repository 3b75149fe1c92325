"""Full camera-radar network with fusion/camera_only/radar_only and single/multi-task modes."""
from __future__ import annotations

import numpy as np
import torch
import torch.nn as nn

from .camera import CameraNet
from .config import ModelConfig
from .heads import DetectionHead, SegmentationHead
from .layers import rearrange_complex, scaled
from .radar import RadarNet


class FusionNet(nn.Module):
    """Forward returns a dict with ``cls``, ``reg`` (detection), ``seg`` (segmentation)
    and ``mu``/``log_var`` (camera latent) where the corresponding branch exists."""

    def __init__(self, cfg: ModelConfig, seed: int = 0):
        super().__init__()
        self.cfg = cfg
        m = cfg.width_mult
        self.latent_rng = torch.Generator().manual_seed(seed)
        self.radar = RadarNet(cfg) if cfg.use_radar else None
        self.camera = CameraNet(cfg, generator=self.latent_rng) if cfg.use_camera else None
        c_det = scaled(cfg.radar_det_channels, m)
        c_seg = scaled(cfg.radar_seg_channels, m)
        c_cam = scaled(cfg.camera_channels, m)
        self.det_head = (DetectionHead(c_det, c_cam, tuple(scaled(w, m) for w in cfg.det_head_widths))
                         if cfg.detection else None)
        self.seg_head = (SegmentationHead(c_seg, c_cam, tuple(scaled(w, m) for w in cfg.seg_head_widths))
                         if cfg.segmentation else None)
        self._c_det, self._c_seg, self._c_cam = c_det, c_seg, c_cam

    def seed_latent(self, seed: int) -> None:
        self.latent_rng.manual_seed(seed)

    def forward(self, rd: torch.Tensor | None, image: torch.Tensor | None) -> dict:
        cfg = self.cfg
        out = {}
        ra_latent = ra_highres = cam = None
        batch = None
        if self.radar is not None:
            _, radar_out = self.radar(rd)
            ra_latent, ra_highres = radar_out
            batch, ref = rd.shape[0], rd
        if self.camera is not None:
            _, dist, cam = self.camera(image)
            out["mu"], out["log_var"] = dist
            batch, ref = image.shape[0], image

        def zeros(c, hw):
            return ref.new_zeros((batch, c) + tuple(hw))

        if self.det_head is not None:
            r = ra_latent if ra_latent is not None else zeros(self._c_det, cfg.det_grid_hw)
            c = cam if cam is not None else zeros(self._c_cam, cfg.camera_bev_hw)
            out["cls"], out["reg"] = self.det_head(r, c)
        if self.seg_head is not None:
            r = ra_highres if ra_highres is not None else zeros(self._c_seg, cfg.seg_grid_hw)
            c = cam if cam is not None else zeros(self._c_cam, cfg.camera_bev_hw)
            out["seg"] = self.seg_head(r, c)
        return out


def count_parameters(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters())


def batch_inputs(samples, dtype=torch.float32):
    """FrameSamples -> (rd real tensor (B, 2C, R, D), image tensor (B, 3, H, W))."""
    rd = torch.stack([rearrange_complex(np.asarray(s.rd.data)) for s in samples]).to(dtype)
    img = torch.stack([torch.from_numpy(np.array(s.camera.image)) for s in samples]).to(dtype)
    return rd, img
