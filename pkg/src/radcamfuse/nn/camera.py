"""Camera branch: variational encoder-decoder from front view to BEV-polar features."""
from __future__ import annotations

from typing import NamedTuple

import torch
import torch.nn as nn

from ..errors import ConfigError, NumericError, ShapeError
from .config import ModelConfig
from .layers import BasicBlock, ConvBNReLU, ResidualBlock, scaled, swap_axes


class LatentDistribution(NamedTuple):
    mu: torch.Tensor
    log_var: torch.Tensor


def reparameterize(mu, log_var, training: bool = True, eps=None, generator=None):
    """z = mu + exp(0.5 * log_var) * eps during training, z = mu at inference."""
    if not (torch.isfinite(mu).all() and torch.isfinite(log_var).all()):
        raise NumericError("non-finite latent statistics")
    if not training:
        return mu
    if eps is None:
        eps = torch.randn(mu.shape, generator=generator, dtype=mu.dtype, device=mu.device)
    return mu + torch.exp(0.5 * log_var) * eps


class SkipAlign(nn.Module):
    """Reshape the spatial extent of an encoder map with two swap/conv/swap passes.

    Pass 1 swaps channels with width, convolves width -> target width, swaps back.
    Pass 2 does the same with height. The feature channel count is unchanged.
    """

    def __init__(self, src_hw, dst_hw):
        super().__init__()
        self.src_hw, self.dst_hw = tuple(src_hw), tuple(dst_hw)
        self.width_conv = nn.Conv2d(src_hw[1], dst_hw[1], 3, padding=1)
        self.height_conv = nn.Conv2d(src_hw[0], dst_hw[0], 3, padding=1)

    def forward(self, x):
        x = swap_axes(self.width_conv(swap_axes(x, -1)), -1)
        x = swap_axes(self.height_conv(swap_axes(x, -2)), -2)
        return x


def _down(n: int, times: int) -> int:
    for _ in range(times):
        n = -(-n // 2)
    return n


class CameraNet(nn.Module):
    def __init__(self, cfg: ModelConfig, generator: torch.Generator | None = None):
        super().__init__()
        self.cfg = cfg
        self.generator = generator
        m = cfg.width_mult
        H, W = cfg.image_hw
        widths = [scaled(w, m) for w in cfg.camera_widths]
        c0 = scaled(cfg.camera_stem, m)
        self.pre_encoder = ConvBNReLU(3, c0, 3)
        blocks, prev = [], c0
        for w, n in zip(widths, cfg.camera_layers):
            blocks.append(ResidualBlock(prev, w, n))
            prev = w
        self.blocks = nn.ModuleList(blocks)
        self.level_hw = {lvl: (_down(H, lvl), _down(W, lvl)) for lvl in range(5)}

        self.bottleneck = ConvBNReLU(widths[3], widths[3], 3)
        self.fc_mu = nn.Linear(widths[3], cfg.latent_dim)
        self.fc_log_var = nn.Linear(widths[3], cfg.latent_dim)

        bh, bw = cfg.camera_bev_hw
        if bh % 8 or bw % 8:
            raise ConfigError(f"camera BEV size {cfg.camera_bev_hw} must be divisible by 8")
        self.seed_hw = (bh // 8, bw // 8)
        cells = self.seed_hw[0] * self.seed_hw[1]
        if cfg.latent_dim % cells:
            raise ConfigError(f"latent_dim {cfg.latent_dim} not divisible into a {self.seed_hw} seed map")
        self.seed_depth = cfg.latent_dim // cells
        c_seed = scaled(cfg.seed_channels, m)
        c_mid = scaled(cfg.seed_channels // 2, m)
        c_low = scaled(cfg.seed_channels // 4, m)
        self.seed_proj = nn.Conv2d(self.seed_depth, c_seed, 1)

        self.align3 = SkipAlign(self.level_hw[3], (bh // 2, bw // 2))
        self.align2 = SkipAlign(self.level_hw[2], (bh, bw))
        self.up1 = nn.ConvTranspose2d(c_seed, c_mid, 2, stride=2)
        self.up2 = nn.ConvTranspose2d(c_mid, c_mid, 2, stride=2)
        self.dec3 = BasicBlock(c_mid + widths[2], c_mid)
        self.up3 = nn.ConvTranspose2d(c_mid, c_low, 2, stride=2)
        self.dec2 = BasicBlock(c_low + widths[1], c_low)
        self.out_channels = scaled(cfg.camera_channels, m)
        self.head = nn.Conv2d(c_low, self.out_channels, 1)

    def skip_align(self, x, level: int):
        if level == 3:
            return self.align3(x)
        if level == 2:
            return self.align2(x)
        raise ConfigError(f"skip alignment defined for levels 2 and 3, not {level}")

    def encode(self, img):
        x0 = self.pre_encoder(img)
        feats = [x0]
        for blk in self.blocks:
            feats.append(blk(feats[-1]))
        pyr = dict(zip(("x0", "x1", "x2", "x3", "x4"), feats))
        h = self.bottleneck(pyr["x4"]).mean(dim=(-2, -1))
        return pyr, LatentDistribution(self.fc_mu(h), self.fc_log_var(h))

    def decode(self, z, pyr):
        b = z.shape[0]
        seed = self.seed_proj(z.view(b, self.seed_depth, *self.seed_hw))
        s = self.up2(torch.relu(self.up1(seed)))
        s = self.dec3(torch.cat([s, self.align3(pyr["x3"])], dim=1))
        s = self.up3(s)
        s = self.dec2(torch.cat([s, self.align2(pyr["x2"])], dim=1))
        return self.head(s)

    def forward(self, img):
        if img.dim() != 4 or tuple(img.shape[1:]) != (3,) + tuple(self.cfg.image_hw):
            raise ShapeError(f"expected (B, 3, {self.cfg.image_hw[0]}, {self.cfg.image_hw[1]}) "
                             f"image, got {tuple(img.shape)}")
        pyr, dist = self.encode(img)
        sample = self.training and self.cfg.variational
        z = reparameterize(dist.mu, dist.log_var, training=sample, generator=self.generator)
        return pyr, dist, self.decode(z, pyr)
