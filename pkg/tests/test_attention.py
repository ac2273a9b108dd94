import math

import pytest
import torch

from arcdepth.attention import (GumbelConfig, Mask, attend, gumbel_sigmoid, harden,
                                keep_rate, kl_sparsity_loss, sample_gumbel_noise,
                                save_mask_png)
from arcdepth.backbone import Architecture, init_params
from arcdepth.config import ConfigError
from oracles import oracle_kl, oracle_mean


def test_gumbel_formula_fixed_points():
    # u = e^-1 -> g = 0; u = e^(-e^-1) -> g = 1
    u = torch.tensor([math.exp(-1), math.exp(-math.exp(-1))], dtype=torch.float64)
    g = -torch.log(-torch.log(u))
    assert torch.allclose(g, torch.tensor([0.0, 1.0], dtype=torch.float64), atol=1e-12)


def test_gumbel_noise_deterministic_and_finite():
    a = sample_gumbel_noise(16, 16, seed=7)
    b = sample_gumbel_noise(16, 16, seed=7)
    assert torch.equal(a, b)
    assert torch.isfinite(a).all()
    assert not torch.equal(a, sample_gumbel_noise(16, 16, seed=8))


def test_gumbel_noise_monte_carlo_mean():
    g = sample_gumbel_noise(1000, 1000, seed=123)
    euler_mascheroni = 0.5772156649
    assert abs(g.double().mean().item() - euler_mascheroni) < 0.01


def test_gumbel_sigmoid_midpoint_and_saturation():
    zero = torch.zeros(2, 2)
    mask = gumbel_sigmoid(zero, zero, tau=1.0)
    assert mask.mode == "soft"
    assert torch.allclose(mask.values, torch.full((2, 2), 0.5))
    sharp = gumbel_sigmoid(torch.full((2, 2), 0.5), zero, tau=0.01)
    assert (1.0 - sharp.values).abs().max() < 1e-9


def test_gumbel_sigmoid_gradient_matches_finite_differences():
    log_alpha = torch.tensor([[0.3, -1.2], [2.0, 0.01]], dtype=torch.float64,
                             requires_grad=True)
    noise = torch.tensor([[0.5, 1.5], [-0.2, 0.0]], dtype=torch.float64)
    tau = 0.7
    out = gumbel_sigmoid(log_alpha, noise, tau).values.sum()
    (grad,) = torch.autograd.grad(out, log_alpha)
    h = 1e-7
    with torch.no_grad():
        flat = log_alpha.reshape(-1)
        for i in range(flat.numel()):
            orig = flat[i].item()
            flat[i] = orig + h
            hi = gumbel_sigmoid(log_alpha, noise, tau).values.sum().item()
            flat[i] = orig - h
            lo = gumbel_sigmoid(log_alpha, noise, tau).values.sum().item()
            flat[i] = orig
            fd = (hi - lo) / (2 * h)
            ag = grad.reshape(-1)[i].item()
            assert abs(fd - ag) / max(abs(fd), abs(ag)) <= 1e-5


def test_gumbel_sigmoid_monotone_in_log_alpha():
    noise = sample_gumbel_noise(8, 8, seed=3)
    lo = gumbel_sigmoid(torch.full((8, 8), -0.5), noise, tau=1.0).values
    hi = gumbel_sigmoid(torch.full((8, 8), 0.5), noise, tau=1.0).values
    assert (hi > lo).all()


def test_lower_tau_sharpens_toward_binary():
    gen = torch.Generator().manual_seed(5)
    log_alpha = torch.randn(16, 16, generator=gen, dtype=torch.float64)
    noise = sample_gumbel_noise(16, 16, seed=6).double()
    m1 = gumbel_sigmoid(log_alpha, noise, tau=1.0).values
    m2 = gumbel_sigmoid(log_alpha, noise, tau=0.3).values
    dist1 = (m1 - m1.round()).abs()
    dist2 = (m2 - m2.round()).abs()
    nonzero = (log_alpha + noise).abs() > 1e-9
    assert (dist2[nonzero] <= dist1[nonzero]).all()


def test_harden_threshold_and_ties():
    soft = Mask(values=torch.tensor([[0.49, 0.51], [0.5, 0.0]]), mode="soft")
    hard = harden(soft)
    assert hard.mode == "hard"
    assert hard.values.tolist() == [[0.0, 1.0], [1.0, 0.0]]
    assert torch.equal(harden(hard).values, hard.values)  # idempotent


def test_harden_blocks_gradient():
    values = torch.rand(4, 4, requires_grad=True)
    hard = harden(Mask(values=values, mode="soft"))
    assert not hard.values.requires_grad


def test_keep_rate():
    assert keep_rate(Mask(values=torch.ones(4, 4), mode="hard")).item() == 1.0
    half = torch.zeros(4, 4)
    half[:2] = 1.0
    assert keep_rate(Mask(values=half, mode="hard")).item() == 0.5
    gen = torch.Generator().manual_seed(9)
    soft = torch.rand(13, 17, generator=gen)
    xi = keep_rate(Mask(values=soft, mode="soft")).item()
    assert abs(xi - oracle_mean(soft.tolist())) < 1e-6


def test_kl_sparsity_values():
    assert kl_sparsity_loss(0.85, 0.85).item() == pytest.approx(0.0, abs=1e-12)
    hand = 0.85 * math.log(1.7) + 0.15 * math.log(0.3)
    assert kl_sparsity_loss(0.5, 0.85).item() == pytest.approx(hand, abs=1e-10)
    assert kl_sparsity_loss(0.5, 0.85).item() == pytest.approx(0.2704, abs=1e-4)


def test_kl_nonnegative_and_convex():
    rho = 0.85
    xis = torch.linspace(0.01, 0.99, 99, dtype=torch.float64)
    losses = kl_sparsity_loss(xis, rho)
    assert (losses >= 0).all()
    for xi, loss in zip(xis.tolist(), losses.tolist()):
        assert loss == pytest.approx(oracle_kl(xi, rho), abs=1e-10)
    # strictly convex: second differences positive
    second = losses[2:] - 2 * losses[1:-1] + losses[:-2]
    assert (second > 0).all()
    # gradient sign flips at xi == rho
    h = 1e-6
    before = (oracle_kl(0.80 + h, rho) - oracle_kl(0.80 - h, rho)) / (2 * h)
    after = (oracle_kl(0.90 + h, rho) - oracle_kl(0.90 - h, rho)) / (2 * h)
    assert before < 0 < after


def test_kl_handles_degenerate_xi():
    assert torch.isfinite(kl_sparsity_loss(0.0, 0.85))
    assert torch.isfinite(kl_sparsity_loss(1.0, 0.85))


def test_gumbel_config_validation():
    with pytest.raises(ConfigError):
        GumbelConfig(tau=0.0)
    with pytest.raises(ConfigError):
        GumbelConfig(rho=1.0)


def test_attend_modes():
    net = init_params(Architecture(kind="generator", out_channels=1, head="linear",
                                   base_width=8), seed=3)
    x = torch.randn(2, 3, 16, 16).clamp(-1, 1)
    soft = attend(net, x, GumbelConfig(), train_mode=True, noise_seed=4)
    assert soft.mode == "soft"
    v = soft.values.detach()
    assert v.shape == (2, 1, 16, 16)
    assert v.min() > 0 and v.max() < 1
    hard = attend(net, x, GumbelConfig(), train_mode=False)
    assert hard.mode == "hard"
    assert set(hard.values.flatten().tolist()) <= {0.0, 1.0}
    # inference is deterministic: no noise involved
    assert torch.equal(hard.values, attend(net, x, GumbelConfig(), train_mode=False).values)


def test_hardened_attend_matches_soft_threshold():
    net = init_params(Architecture(kind="generator", out_channels=1, head="linear",
                                   base_width=8), seed=3)
    x = torch.randn(1, 3, 16, 16).clamp(-1, 1)
    with torch.no_grad():
        probs = torch.sigmoid(net(x))
    hard = attend(net, x, GumbelConfig(), train_mode=False)
    assert torch.equal(hard.values, (probs >= 0.5).float())


def test_mask_validation():
    with pytest.raises(ValueError):
        Mask(values=torch.tensor([[0.5, 2.0]]), mode="soft")
    with pytest.raises(ValueError):
        Mask(values=torch.tensor([[0.5]]), mode="hard")
    with pytest.raises(ValueError):
        Mask(values=torch.tensor([[float("nan")]]), mode="soft")


def test_mask_png_export(tmp_path):
    from PIL import Image
    import numpy as np

    mask = Mask(values=torch.tensor([[1.0, 0.0], [0.0, 1.0]]), mode="hard")
    save_mask_png(mask, tmp_path / "m.png")
    arr = np.asarray(Image.open(tmp_path / "m.png"))
    assert arr.tolist() == [[255, 0], [0, 255]]
