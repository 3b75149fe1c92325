"""Concatenation-fusion detection and segmentation heads."""
from __future__ import annotations

import math
from typing import NamedTuple

import torch
import torch.nn as nn

from ..errors import ShapeError
from .layers import BasicBlock, ConvBNReLU, bilinear_resize


class DetectionHead(nn.Module):
    def __init__(self, radar_channels, camera_channels, widths=(96, 96, 96), prior=0.01):
        super().__init__()
        self.radar_channels, self.camera_channels = radar_channels, camera_channels
        cin = radar_channels + camera_channels
        stages, prev = [], cin
        for w in (cin,) + tuple(widths):
            stages.append(ConvBNReLU(prev, w))
            prev = w
        self.trunk = nn.Sequential(*stages)
        self.cls = nn.Conv2d(prev, 1, 3, padding=1)
        self.reg = nn.Conv2d(prev, 2, 3, padding=1)
        nn.init.constant_(self.cls.bias, -math.log((1 - prior) / prior))

    def forward(self, radar_feat, cam_feat):
        x = _fuse(radar_feat, cam_feat, self.radar_channels, self.camera_channels)
        x = self.trunk(x)
        return torch.sigmoid(self.cls(x)), self.reg(x)


class SegmentationHead(nn.Module):
    def __init__(self, radar_channels, camera_channels, widths=(64, 32)):
        super().__init__()
        self.radar_channels, self.camera_channels = radar_channels, camera_channels
        blocks, prev = [], radar_channels + camera_channels
        for w in widths:
            blocks.append(BasicBlock(prev, w))
            prev = w
        self.blocks = nn.Sequential(*blocks)
        self.out = nn.Conv2d(prev, 1, 1)

    def forward(self, radar_feat, cam_feat):
        x = _fuse(radar_feat, cam_feat, self.radar_channels, self.camera_channels)
        return torch.sigmoid(self.out(self.blocks(x)))


def _fuse(radar_feat, cam_feat, c_radar, c_cam):
    if radar_feat.shape[1] != c_radar or cam_feat.shape[1] != c_cam:
        raise ShapeError(f"head expects {c_radar}+{c_cam} channels, got "
                         f"{radar_feat.shape[1]}+{cam_feat.shape[1]}")
    cam_feat = bilinear_resize(cam_feat, tuple(radar_feat.shape[-2:]))
    return torch.cat([radar_feat, cam_feat], dim=1)


class DetectionPrediction(NamedTuple):
    cls: object  # (1, R, A) probabilities
    reg: object  # (2, R, A) offsets in bins


class SegmentationPrediction(NamedTuple):
    seg: object  # (1, R, A) probabilities
