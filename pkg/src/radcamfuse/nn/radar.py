"""Radar branch: range-Doppler cube in, range-azimuth feature maps out."""
from __future__ import annotations

from typing import NamedTuple

import torch
import torch.nn as nn
import torch.nn.functional as F

from ..errors import ConfigError, NumericError, ShapeError
from .config import ModelConfig
from .layers import BasicBlock, ResidualBlock, bilinear_resize, scaled, swap_axes


class RadarOutputs(NamedTuple):
    ra_latent: torch.Tensor | None   # (B, C_det, R_det, A_det)
    ra_highres: torch.Tensor | None  # (B, C_seg, R_seg, A_seg)


class MIMOPreEncoder(nn.Module):
    """Gathers the n_tx Doppler-shifted copies of each target onto one Doppler bin.

    Output at Doppler bin d mixes input bins d + k*delta (k = 1..n_tx), wrapped circularly,
    so a target observed at Doppler D responds at output bin D.
    """

    def __init__(self, cin, cout, n_tx=12, delta=16, doppler_bins=256):
        super().__init__()
        if not 0 < delta < doppler_bins:
            raise ConfigError(f"Doppler shift {delta} must lie in (0, {doppler_bins})")
        self.n_tx, self.delta, self.doppler_bins = n_tx, delta, doppler_bins
        self.conv = nn.Conv2d(cin, cout, kernel_size=(1, n_tx), dilation=(1, delta), bias=False)
        self.bn = nn.BatchNorm2d(cout)

    def gather(self, x):
        if x.shape[-1] != self.doppler_bins:
            raise ConfigError(f"input has {x.shape[-1]} Doppler bins, pre-encoder configured "
                              f"for {self.doppler_bins}")
        if self.doppler_bins % self.delta == 0:
            return self._gather_grouped(x)
        return self._gather_dilated(x)

    @staticmethod
    def _wrap(x, extra):
        n = x.shape[-1]
        reps = -(-(n + extra) // n)
        return torch.cat([x] * reps, dim=-1)[..., : n + extra]

    def _gather_dilated(self, x):
        x = torch.roll(x, shifts=-self.delta, dims=-1)
        return self.conv(self._wrap(x, (self.n_tx - 1) * self.delta))

    def _gather_grouped(self, x):
        # Bin d = g*delta + o. Shifts are whole groups, so the dilated circular conv
        # is an undilated circular conv along g with o folded into the range axis.
        b, c, r, d = x.shape
        g, o = d // self.delta, self.delta
        xg = x.reshape(b, c, r, g, o).transpose(-1, -2).reshape(b, c, r * o, g)
        xg = self._wrap(torch.roll(xg, shifts=-1, dims=-1), self.n_tx - 1)
        y = F.conv2d(xg, self.conv.weight)
        cout = y.shape[1]
        return y.reshape(b, cout, r, o, g).transpose(-1, -2).reshape(b, cout, r, d)

    def forward(self, x):
        return self.bn(self.gather(x))


class RadarNet(nn.Module):
    """MIMO pre-encoder, four residual encoder blocks, channel swap and RA decoder.

    Encoder levels are laid out (channels, range, Doppler). Each level is projected to
    azimuth-many channels by a 1x1 conv and then swapped so that the former Doppler
    axis becomes the feature axis and the learned azimuth axis becomes the width.
    """

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        m = cfg.width_mult
        cin = 2 * cfg.rd_channels
        c0 = scaled(cfg.mimo_channels, m)
        widths = [scaled(w, m) for w in cfg.radar_widths]
        R, D = cfg.rd_range_bins, cfg.rd_doppler_bins
        if cfg.det_grid_hw[0] * 4 != R or cfg.seg_grid_hw[0] * 2 != R:
            raise ConfigError(f"grid range bins {cfg.det_grid_hw[0]}/{cfg.seg_grid_hw[0]} "
                              f"incompatible with {R} RD range bins")
        self.pre_encoder = MIMOPreEncoder(cin, c0, cfg.n_tx, cfg.delta, D)
        blocks, prev = [], c0
        for w, n in zip(widths, cfg.radar_layers):
            blocks.append(ResidualBlock(prev, w, n))
            prev = w
        self.blocks = nn.ModuleList(blocks)

        # Doppler extent of x1..x4 becomes the feature count after swapping
        dop = [D]
        for _ in range(4):
            dop.append(-(-dop[-1] // 2))
        az_det = cfg.det_grid_hw[1]
        az_seg = cfg.seg_grid_hw[1]
        c_det = scaled(cfg.radar_det_channels, m)
        c_seg = scaled(cfg.radar_seg_channels, m)
        self.c_det, self.c_seg = c_det, c_seg

        self.to_azimuth4 = nn.Conv2d(widths[3], az_det, 1)
        self.to_azimuth3 = nn.Conv2d(widths[2], az_det, 1)
        self.to_azimuth2 = nn.Conv2d(widths[1], az_det, 1)
        self.up4 = nn.ConvTranspose2d(dop[4], dop[4], 3, stride=(2, 1), padding=1, output_padding=(1, 0))
        self.dec3 = BasicBlock(dop[4] + dop[3], c_det)
        self.up3 = nn.ConvTranspose2d(c_det, c_det, 3, stride=(2, 1), padding=1, output_padding=(1, 0))
        self.dec2 = BasicBlock(c_det + dop[2], c_det)
        if cfg.segmentation:
            self.to_azimuth1 = nn.Conv2d(widths[0], az_seg, 1)
            self.up2 = nn.ConvTranspose2d(c_det, c_seg, 3, stride=(2, 1), padding=1, output_padding=(1, 0))
            self.dec1 = BasicBlock(c_seg + dop[1], c_seg)

    def encode(self, x):
        x0 = self.pre_encoder(x)
        feats = [x0]
        for blk in self.blocks:
            feats.append(blk(feats[-1]))
        return dict(zip(("x0", "x1", "x2", "x3", "x4"), feats))

    @staticmethod
    def _match_range(t, ref):
        if t.shape[-2:] != ref.shape[-2:]:
            t = bilinear_resize(t, tuple(ref.shape[-2:]))
        return t

    def decode(self, pyr):
        cfg = self.cfg
        t4 = swap_axes(self.to_azimuth4(pyr["x4"]))
        t3 = swap_axes(self.to_azimuth3(pyr["x3"]))
        t2 = swap_axes(self.to_azimuth2(pyr["x2"]))
        s = self.dec3(torch.cat([self._match_range(self.up4(t4), t3), t3], dim=1))
        latent = self.dec2(torch.cat([self._match_range(self.up3(s), t2), t2], dim=1))
        highres = None
        if cfg.segmentation:
            t1 = swap_axes(self.to_azimuth1(pyr["x1"]))
            u = self._match_range(self.up2(latent), t1)
            highres = self.dec1(torch.cat([u, t1], dim=1))
        if not cfg.detection:
            latent = None
        return RadarOutputs(latent, highres)

    def forward(self, x):
        if x.dim() != 4 or x.shape[1] != 2 * self.cfg.rd_channels:
            raise ShapeError(f"expected (B, {2 * self.cfg.rd_channels}, R, D) input, got {tuple(x.shape)}")
        if not torch.isfinite(x).all():
            raise NumericError("non-finite values in radar input")
        pyr = self.encode(x)
        return pyr, self.decode(pyr)
