"""Shared tensor ops and layer blocks."""
from __future__ import annotations

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from ..errors import ShapeError


def scaled(width: int, mult: float, minimum: int = 2) -> int:
    return max(minimum, int(round(width * mult)))


def rearrange_complex(rd) -> torch.Tensor:
    """Complex (..., C, R, D) -> real (..., 2C, R, D): real parts first, then imaginary."""
    if isinstance(rd, np.ndarray):
        rd = torch.from_numpy(np.ascontiguousarray(rd))
    if not torch.is_complex(rd) or rd.dim() < 3:
        raise ShapeError(f"expected a complex C x R x D tensor, got {tuple(rd.shape)} {rd.dtype}")
    return torch.cat([rd.real, rd.imag], dim=-3)


def split_complex(t: torch.Tensor) -> torch.Tensor:
    """Inverse of :func:`rearrange_complex`."""
    c2 = t.shape[-3]
    if c2 % 2:
        raise ShapeError(f"channel count {c2} is odd")
    return torch.complex(t[..., : c2 // 2, :, :], t[..., c2 // 2:, :, :])


def swap_axes(t: torch.Tensor, axis: int = -1) -> torch.Tensor:
    """Exchange the channel axis with a spatial axis: (C, H, W) -> (W, H, C) by default.

    Works on unbatched 3-D and batched 4-D tensors; ``axis`` is -1 (width) or -2 (height).
    """
    return t.transpose(-3, axis)


def bilinear_resize(src: torch.Tensor, size: tuple[int, int]) -> torch.Tensor:
    """Half-pixel-centre bilinear resampling of (N, C, H, W) or (C, H, W) maps."""
    if tuple(src.shape[-2:]) == tuple(size):
        return src
    squeeze = src.dim() == 3
    x = src[None] if squeeze else src
    out = F.interpolate(x, size=size, mode="bilinear", align_corners=False)
    return out[0] if squeeze else out


class ConvBNReLU(nn.Sequential):
    def __init__(self, cin, cout, kernel_size=3, stride=1):
        super().__init__(
            nn.Conv2d(cin, cout, kernel_size, stride=stride, padding=kernel_size // 2, bias=False),
            nn.BatchNorm2d(cout),
            nn.ReLU(inplace=True),
        )


class ResidualLayer(nn.Module):
    """Two 3x3 conv-BN stages with an identity (or projected) shortcut."""

    def __init__(self, cin, cout, stride=1):
        super().__init__()
        self.conv1 = nn.Conv2d(cin, cout, 3, stride=stride, padding=1, bias=False)
        self.bn1 = nn.BatchNorm2d(cout)
        self.conv2 = nn.Conv2d(cout, cout, 3, padding=1, bias=False)
        self.bn2 = nn.BatchNorm2d(cout)
        self.shortcut = None
        if stride != 1 or cin != cout:
            self.shortcut = nn.Sequential(
                nn.Conv2d(cin, cout, 1, stride=stride, bias=False), nn.BatchNorm2d(cout))

    def forward(self, x):
        identity = x if self.shortcut is None else self.shortcut(x)
        out = F.relu(self.bn1(self.conv1(x)))
        out = self.bn2(self.conv2(out))
        return F.relu(out + identity)


class ResidualBlock(nn.Sequential):
    """``n_layers`` residual layers; the first one downsamples 2x2 (ceil on odd extents)."""

    def __init__(self, cin, cout, n_layers):
        layers = [ResidualLayer(cin, cout, stride=2)]
        layers += [ResidualLayer(cout, cout) for _ in range(n_layers - 1)]
        super().__init__(*layers)


class BasicBlock(nn.Sequential):
    """Conv-BN-ReLU applied twice."""

    def __init__(self, cin, cout, mid=None):
        mid = cout if mid is None else mid
        super().__init__(ConvBNReLU(cin, mid), ConvBNReLU(mid, cout))
