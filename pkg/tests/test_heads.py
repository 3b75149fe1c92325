import itertools

import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from radcamfuse.errors import ShapeError
from radcamfuse.nn import DetectionHead, FusionNet, ModelConfig, SegmentationHead, count_parameters
from radcamfuse.nn.config import MODES, TASKS
from radcamfuse.nn.layers import bilinear_resize
from radcamfuse.synth import CANONICAL, SMALL

from conftest import central_diff, random_image, random_rd, rel_err
from oracles import bilinear_oracle


def test_bilinear_2x2_to_3x3_center():
    src = torch.tensor([[[1.0, 2.0], [3.0, 4.0]]], dtype=torch.float64)
    out = bilinear_resize(src, (3, 3))
    assert out.shape == (1, 3, 3)
    assert out[0, 1, 1].item() == pytest.approx(2.5, abs=1e-12)
    np.testing.assert_allclose(out[0].numpy(), bilinear_oracle(src[0].numpy(), 3, 3), atol=1e-12)


@pytest.mark.parametrize("src_hw,dst_hw", [((4, 5), (7, 3)), ((64, 64), (128, 224)), ((3, 8), (3, 2))])
def test_bilinear_matches_oracle(src_hw, dst_hw):
    src = np.random.default_rng(0).standard_normal(src_hw)
    got = bilinear_resize(torch.from_numpy(src)[None], dst_hw)[0].numpy()
    np.testing.assert_allclose(got, bilinear_oracle(src, *dst_hw), atol=1e-12)


def test_bilinear_identity_and_constant():
    x = torch.randn(2, 3, 5, 6)
    assert torch.equal(bilinear_resize(x, (5, 6)), x)
    c = torch.full((1, 1, 4, 4), 3.25)
    torch.testing.assert_close(bilinear_resize(c, (9, 13)), torch.full((1, 1, 9, 13), 3.25))


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 9), st.integers(1, 9), st.integers(1, 20), st.integers(1, 20),
       st.integers(0, 2 ** 31 - 1))
def test_bilinear_preserves_range(h, w, oh, ow, seed):
    x = torch.randn(1, 2, h, w, generator=torch.Generator().manual_seed(seed), dtype=torch.float64)
    y = bilinear_resize(x, (oh, ow))
    assert y.min() >= x.min() - 1e-12 and y.max() <= x.max() + 1e-12


def test_detection_head_canonical():
    torch.manual_seed(0)
    head = DetectionHead(128, 16).eval()
    with torch.no_grad():
        cls, reg = head(torch.randn(1, 128, 128, 224), torch.randn(1, 16, 64, 64))
    assert tuple(cls.shape) == (1, 1, 128, 224) and tuple(reg.shape) == (1, 2, 128, 224)
    assert cls.min() > 0 and cls.max() < 1
    assert head.trunk[0][0].in_channels == 144
    assert [s[0].out_channels for s in head.trunk] == [144, 96, 96, 96]


def test_segmentation_head_canonical():
    torch.manual_seed(0)
    head = SegmentationHead(64, 16).eval()
    with torch.no_grad():
        seg = head(torch.randn(1, 64, 256, 224), torch.randn(1, 16, 64, 64))
    assert tuple(seg.shape) == (1, 1, 256, 224)
    assert seg.min() > 0 and seg.max() < 1


def test_heads_channel_mismatch():
    with pytest.raises(ShapeError):
        DetectionHead(8, 4)(torch.zeros(1, 9, 4, 4), torch.zeros(1, 4, 4, 4))
    with pytest.raises(ShapeError):
        SegmentationHead(8, 4)(torch.zeros(1, 8, 4, 4), torch.zeros(1, 3, 4, 4))


def test_canonical_fusion_outputs_and_budget():
    torch.manual_seed(0)
    model = FusionNet(ModelConfig.from_geometry(CANONICAL)).eval()
    assert 6.17e6 <= count_parameters(model) <= 8.35e6
    cfg = model.cfg
    with torch.no_grad():
        out = model(random_rd(cfg), random_image(cfg))
    assert tuple(out["cls"].shape) == (1, 1, 128, 224)
    assert tuple(out["reg"].shape) == (1, 2, 128, 224)
    assert tuple(out["seg"].shape) == (1, 1, 256, 224)


def test_param_count_equals_layer_sum():
    torch.manual_seed(0)
    model = FusionNet(ModelConfig.from_geometry(SMALL, width_mult=0.25))
    total = 0
    for mod in model.modules():
        for p in mod.parameters(recurse=False):
            total += int(np.prod(p.shape))
    assert count_parameters(model) == total


@pytest.mark.parametrize("mode,tasks", list(itertools.product(MODES, TASKS)))
def test_mode_matrix_shapes(mode, tasks):
    cfg = ModelConfig.from_geometry(SMALL, width_mult=0.25, mode=mode, tasks=tasks)
    torch.manual_seed(0)
    model = FusionNet(cfg).eval()
    rd = random_rd(cfg, batch=2) if cfg.use_radar else None
    img = random_image(cfg, batch=2) if cfg.use_camera else None
    with torch.no_grad():
        out = model(rd, img)
    assert ("cls" in out) == cfg.detection and ("seg" in out) == cfg.segmentation
    if cfg.detection:
        assert tuple(out["cls"].shape) == (2, 1) + cfg.det_grid_hw
        assert tuple(out["reg"].shape) == (2, 2) + cfg.det_grid_hw
    if cfg.segmentation:
        assert tuple(out["seg"].shape) == (2, 1) + cfg.seg_grid_hw
    assert (model.radar is None) == (mode == "camera_only")
    assert (model.camera is None) == (mode == "radar_only")


def test_radar_only_equals_fusion_with_zero_camera():
    """radar_only feeds zeros where camera features would go."""
    torch.manual_seed(0)
    fused = FusionNet(ModelConfig.from_geometry(SMALL, width_mult=0.25)).eval()
    radar_only = FusionNet(ModelConfig.from_geometry(SMALL, width_mult=0.25, mode="radar_only")).eval()
    radar_only.load_state_dict({k: v for k, v in fused.state_dict().items()
                                if not k.startswith("camera.")})
    cfg = fused.cfg
    rd = random_rd(cfg)
    with torch.no_grad():
        r_out = radar_only.radar(rd)[1]
        zeros = torch.zeros(1, radar_only._c_cam, *cfg.camera_bev_hw)
        expected = fused.det_head(r_out.ra_latent, zeros)[0]
        got = radar_only(rd, None)["cls"]
    assert torch.equal(got, expected)


def test_fused_model_gradient_check():
    cfg = ModelConfig(rd_channels=2, rd_range_bins=16, rd_doppler_bins=16, delta=1, image_hw=(16, 16),
                      det_grid_hw=(4, 6), seg_grid_hw=(8, 6), camera_bev_hw=(8, 8), width_mult=0.1,
                      latent_dim=4, variational=False)
    torch.manual_seed(5)
    model = FusionNet(cfg).double().eval()
    rd = random_rd(cfg, dtype=torch.float64)
    img = random_image(cfg, dtype=torch.float64)
    g = torch.Generator().manual_seed(0)
    w_cls = torch.randn(1, 1, *cfg.det_grid_hw, generator=g, dtype=torch.float64)
    w_seg = torch.randn(1, 1, *cfg.seg_grid_hw, generator=g, dtype=torch.float64)

    def scalar(r, i):
        out = model(r, i)
        return (out["cls"] * w_cls).sum() + (out["reg"] ** 2).sum() + (out["seg"] * w_seg).sum()

    ri, ii = rd.clone().requires_grad_(True), img.clone().requires_grad_(True)
    scalar(ri, ii).backward()
    idx_r = torch.randperm(rd.numel(), generator=g)[:12]
    idx_i = torch.randperm(img.numel(), generator=g)[:12]

    def f_r(v):
        y = rd.clone().view(-1)
        y[idx_r] = v
        return scalar(y.view_as(rd), img).item()

    def f_i(v):
        y = img.clone().view(-1)
        y[idx_i] = v
        return scalar(rd, y.view_as(img)).item()

    with torch.no_grad():
        num_r = central_diff(f_r, rd.view(-1)[idx_r].clone(), h=1e-4)
        num_i = central_diff(f_i, img.view(-1)[idx_i].clone(), h=1e-4)
    assert rel_err(ri.grad.view(-1)[idx_r], num_r) < 1e-3
    assert rel_err(ii.grad.view(-1)[idx_i], num_i) < 1e-3
