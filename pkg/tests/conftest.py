import numpy as np
import pytest
import torch

from radcamfuse.config import GenerateConfig
from radcamfuse.nn import ModelConfig
from radcamfuse.runner import run_generate
from radcamfuse.synth import CANONICAL, SMALL


@pytest.fixture(autouse=True)
def _torch_threads():
    torch.set_num_threads(1)
    yield


@pytest.fixture(scope="session")
def small_dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("small_ds")
    run_generate(GenerateConfig(preset="small", n_frames=12, data_seed=3), root)
    return root


@pytest.fixture
def tiny_cfg():
    """Small-geometry fusion/multitask model at width 0.25."""
    return ModelConfig.from_geometry(SMALL, width_mult=0.25)


@pytest.fixture(scope="session")
def canonical_cfg():
    return ModelConfig.from_geometry(CANONICAL)


def random_rd(cfg, batch=1, seed=0, dtype=torch.float32):
    g = torch.Generator().manual_seed(seed)
    return torch.randn(batch, 2 * cfg.rd_channels, cfg.rd_range_bins, cfg.rd_doppler_bins,
                       generator=g, dtype=dtype)


def random_image(cfg, batch=1, seed=0, dtype=torch.float32):
    g = torch.Generator().manual_seed(seed)
    return torch.rand(batch, 3, *cfg.image_hw, generator=g, dtype=dtype)


def central_diff(f, x: torch.Tensor, h: float = 1e-6) -> torch.Tensor:
    """Numerical gradient of scalar f at x (float64), one coordinate at a time."""
    x = x.detach().clone()
    grad = torch.zeros_like(x)
    flat, gflat = x.view(-1), grad.view(-1)
    for i in range(flat.numel()):
        orig = flat[i].item()
        flat[i] = orig + h
        fp = float(f(x))
        flat[i] = orig - h
        fm = float(f(x))
        flat[i] = orig
        gflat[i] = (fp - fm) / (2 * h)
    return grad


def rel_err(a, b) -> float:
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-12))


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2])):
            terminalreporter.write_line(line)
