import sys
from pathlib import Path

import pytest
import torch

sys.path.insert(0, str(Path(__file__).parent))

from arcdepth.backbone import Architecture, init_params
from arcdepth.data import Domain, GeneratorConfig, generate_dataset


@pytest.fixture(scope="session", autouse=True)
def _single_thread():
    torch.set_num_threads(1)


@pytest.fixture(scope="session")
def tiny_gen_config():
    return GeneratorConfig(height=32, width=32, n_samples=12, seed=5)


@pytest.fixture(scope="session")
def tiny_real(tiny_gen_config):
    return generate_dataset(tiny_gen_config, Domain.REAL)


@pytest.fixture(scope="session")
def tiny_syn(tiny_gen_config):
    return generate_dataset(
        GeneratorConfig(height=32, width=32, n_samples=24, seed=5), Domain.SYNTHETIC)


@pytest.fixture(scope="session")
def feature_extractor():
    return init_params(Architecture(kind="features", base_width=8), seed=21)


def finite_difference_grad(f, x, h):
    """Central-difference gradient of scalar f at flat positions of x."""
    grads = torch.zeros_like(x)
    flat = x.reshape(-1)
    g = grads.reshape(-1)
    for i in range(flat.numel()):
        orig = flat[i].item()
        flat[i] = orig + h
        hi = f()
        flat[i] = orig - h
        lo = f()
        flat[i] = orig
        g[i] = (hi - lo) / (2 * h)
    return grads
