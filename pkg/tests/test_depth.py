import numpy as np
import pytest
import torch

from arcdepth.backbone import Architecture, image_to_tensor, init_params
from arcdepth.depth import (DepthPrediction, depth_l1_loss, mixed_depth_loss,
                            predict, save_depth_png, save_depth_pfm)
from oracles import oracle_masked_l1


def test_l1_identity_and_offset():
    target = torch.rand(4, 4) * 5 + 1
    valid = torch.ones(4, 4, dtype=torch.bool)
    assert depth_l1_loss(target, target, valid).item() == 0.0
    assert depth_l1_loss(target + 0.5, target, valid).item() == pytest.approx(0.5)


def test_l1_ignores_invalid_pixels():
    target = torch.ones(2, 2)
    pred = torch.tensor([[2.0, 2.0], [101.0, 101.0]])
    valid = torch.tensor([[True, True], [False, False]])
    assert depth_l1_loss(pred, target, valid).item() == pytest.approx(1.0)


def test_l1_matches_masked_oracle():
    gen = torch.Generator().manual_seed(7)
    for trial in range(10):
        pred = torch.rand(6, 7, generator=gen, dtype=torch.float64) * 10
        target = torch.rand(6, 7, generator=gen, dtype=torch.float64) * 10
        valid = torch.rand(6, 7, generator=gen) > 0.3
        if not valid.any():
            continue
        got = depth_l1_loss(pred, target, valid).item()
        want = oracle_masked_l1(pred.tolist(), target.tolist(), valid.tolist())
        assert got == pytest.approx(want, abs=1e-10)


def test_l1_permutation_invariant():
    gen = torch.Generator().manual_seed(8)
    pred = torch.rand(5, 5, generator=gen, dtype=torch.float64)
    target = torch.rand(5, 5, generator=gen, dtype=torch.float64)
    valid = torch.ones(5, 5, dtype=torch.bool)
    perm = torch.randperm(25, generator=gen)
    assert depth_l1_loss(pred, target, valid).item() == pytest.approx(
        depth_l1_loss(pred.reshape(-1)[perm].reshape(5, 5),
                      target.reshape(-1)[perm].reshape(5, 5), valid).item(),
        abs=1e-12)


def test_l1_zero_valid_errors():
    with pytest.raises(ValueError, match="no valid pixels"):
        depth_l1_loss(torch.ones(2, 2), torch.ones(2, 2),
                      torch.zeros(2, 2, dtype=torch.bool))


def test_l1_shape_mismatch():
    with pytest.raises(ValueError):
        depth_l1_loss(torch.ones(2, 2), torch.ones(3, 3),
                      torch.ones(2, 2, dtype=torch.bool))


def test_mixed_loss_is_mean_of_domain_means():
    ones = torch.ones(2, 2)
    valid = torch.ones(2, 2, dtype=torch.bool)
    loss = mixed_depth_loss(ones + 1.0, ones, valid, ones + 3.0, ones, valid)
    assert loss.item() == pytest.approx(2.0)  # 0.5 * (1 + 3)


def test_predict_contract(tiny_real):
    net = init_params(Architecture(kind="depth", out_channels=1, base_width=8,
                                   depth_max=10.0), seed=2)
    image = image_to_tensor(tiny_real[0].image)
    pred = predict(net, image)
    assert isinstance(pred, DepthPrediction)
    assert pred.cap == 10.0
    assert pred.values.shape == tiny_real[0].depth.shape
    assert pred.values.min() > 0 and pred.values.max() <= 10.0
    again = predict(net, image)
    assert np.array_equal(pred.values, again.values)


def test_predict_gradient_through_loss():
    net = init_params(Architecture(kind="depth", out_channels=1, base_width=8), seed=3)
    net.double()
    gen = torch.Generator().manual_seed(4)
    x = (torch.rand(1, 3, 16, 16, generator=gen, dtype=torch.float64) * 2 - 1)
    target = torch.rand(16, 16, generator=gen, dtype=torch.float64) * 9 + 0.5
    valid = torch.ones(16, 16, dtype=torch.bool)

    def scalar():
        return depth_l1_loss(net(x)[0, 0], target, valid)

    loss = scalar()
    params = [p for p in net.parameters()]
    grads = torch.autograd.grad(loss, params)
    gen2 = torch.Generator().manual_seed(5)
    sizes = [p.numel() for p in params]
    total = sum(sizes)
    h = 1e-6
    with torch.no_grad():
        for _ in range(10):
            pos = int(torch.randint(0, total, (1,), generator=gen2))
            pi = 0
            while pos >= sizes[pi]:
                pos -= sizes[pi]
                pi += 1
            flat = params[pi].reshape(-1)
            orig = flat[pos].item()
            flat[pos] = orig + h
            hi = scalar().item()
            flat[pos] = orig - h
            lo = scalar().item()
            flat[pos] = orig
            fd = (hi - lo) / (2 * h)
            ag = grads[pi].reshape(-1)[pos].item()
            assert abs(fd - ag) / max(abs(fd), abs(ag), 1e-8) <= 1e-3


def test_depth_exports(tmp_path):
    from PIL import Image
    from arcdepth.pfm import read_pfm

    values = np.linspace(0.5, 9.5, 16, dtype=np.float32).reshape(4, 4)
    save_depth_pfm(values, tmp_path / "d.pfm")
    assert np.array_equal(read_pfm(tmp_path / "d.pfm"), values)
    save_depth_png(values, cap=10.0, path=tmp_path / "d.png")
    arr = np.asarray(Image.open(tmp_path / "d.png"))
    assert arr.shape == (4, 4, 3)
