import numpy as np
import pytest
import torch

from arcdepth.attention import Mask
from arcdepth.inpaint import (InpaintLossWeights, adversarial_loss_discriminator,
                              adversarial_loss_generator, compose, gate, gram,
                              inpaint_loss, perceptual_loss, random_training_mask,
                              rgb_reconstruction_loss, style_loss)
from oracles import oracle_gram, oracle_l1_mean


def random_hard_mask(h, w, seed):
    gen = torch.Generator().manual_seed(seed)
    return Mask(values=(torch.rand(h, w, generator=gen) > 0.3).float(), mode="hard")


def test_compose_extremes():
    gen = torch.Generator().manual_seed(0)
    image = torch.rand(3, 8, 8, generator=gen) * 2 - 1
    fill = torch.rand(3, 8, 8, generator=gen) * 2 - 1
    ones = Mask(values=torch.ones(8, 8), mode="hard")
    zeros = Mask(values=torch.zeros(8, 8), mode="hard")
    assert torch.equal(compose(ones, image, fill), image)
    assert torch.equal(compose(zeros, image, fill), fill)


def test_compose_keeps_pixels_bit_exact():
    gen = torch.Generator().manual_seed(1)
    for trial in range(20):
        image = torch.rand(3, 12, 12, generator=gen) * 2 - 1
        fill = torch.rand(3, 12, 12, generator=gen) * 2 - 1
        mask = random_hard_mask(12, 12, trial)
        out = compose(mask, image, fill)
        kept = mask.values.bool()
        assert torch.equal(out[:, kept], image[:, kept])
        assert torch.equal(out[:, ~kept], fill[:, ~kept])


def test_compose_soft_blend():
    image = torch.ones(1, 2, 2)
    fill = -torch.ones(1, 2, 2)
    mask = Mask(values=torch.full((2, 2), 0.25), mode="soft")
    assert torch.allclose(compose(mask, image, fill), torch.full((1, 2, 2), -0.5))


def test_compose_shape_mismatch():
    mask = Mask(values=torch.ones(4, 4), mode="hard")
    with pytest.raises(ValueError):
        compose(mask, torch.zeros(3, 4, 4), torch.zeros(3, 5, 5))
    with pytest.raises(ValueError):
        compose(mask, torch.zeros(3, 5, 5), torch.zeros(3, 5, 5))


def test_gate_zeroes_removed():
    mask = Mask(values=torch.tensor([[1.0, 0.0]]), mode="hard")
    image = torch.full((3, 1, 2), 0.7)
    gated = gate(mask, image)
    assert torch.equal(gated[:, 0, 0], image[:, 0, 0])
    assert gated[:, 0, 1].tolist() == [0.0] * 3


def test_random_training_mask_properties():
    rates = []
    for seed in range(100):
        mask = random_training_mask(64, 64, rho=0.85, seed=seed)
        assert mask.mode == "hard"
        rates.append(mask.values.mean().item())
        assert (mask.values == 0).sum() >= 1  # rho < 1 removes something
    rates = np.asarray(rates)
    assert (np.abs(rates - 0.85) <= 0.03).all()
    # determinism
    a = random_training_mask(32, 32, 0.9, seed=5)
    b = random_training_mask(32, 32, 0.9, seed=5)
    assert torch.equal(a.values, b.values)
    # near-1 rho still removes at least one pixel
    tight = random_training_mask(32, 32, 1 - 1 / (32 * 32), seed=2)
    assert (tight.values == 0).sum() >= 1


def test_rgb_reconstruction_loss():
    a = torch.zeros(1, 3, 4, 4)
    assert rgb_reconstruction_loss(a, a).item() == 0.0
    assert rgb_reconstruction_loss(a + 0.5, a).item() == pytest.approx(0.5)
    gen = torch.Generator().manual_seed(2)
    x = torch.rand(2, 3, 5, 5, generator=gen, dtype=torch.float64)
    y = torch.rand(2, 3, 5, 5, generator=gen, dtype=torch.float64)
    assert rgb_reconstruction_loss(x, y).item() == pytest.approx(
        oracle_l1_mean(x.tolist(), y.tolist()), abs=1e-10)


def test_rgb_reconstruction_removed_only():
    mask = Mask(values=torch.tensor([[1.0, 0.0], [1.0, 1.0]]), mode="hard")
    out = torch.zeros(1, 1, 2, 2)
    target = torch.ones(1, 1, 2, 2)
    # only the single removed pixel counts
    assert rgb_reconstruction_loss(out, target, removed_only=mask).item() == \
        pytest.approx(1.0)


def test_perceptual_and_style_zero_on_identical(feature_extractor):
    gen = torch.Generator().manual_seed(3)
    x = (torch.rand(1, 3, 16, 16, generator=gen) * 2 - 1)
    assert perceptual_loss(feature_extractor, x, x).item() == 0.0
    assert style_loss(feature_extractor, x, x).item() == 0.0


def test_perceptual_loss_matches_raw_pyramids(feature_extractor):
    gen = torch.Generator().manual_seed(4)
    a = torch.rand(1, 3, 16, 16, generator=gen) * 2 - 1
    b = torch.rand(1, 3, 16, 16, generator=gen) * 2 - 1
    expected = 0.0
    for fa, fb in zip(feature_extractor(a), feature_extractor(b)):
        expected += oracle_l1_mean(fa.tolist(), fb.tolist())
    got = perceptual_loss(feature_extractor, a, b).item()
    assert got == pytest.approx(expected, rel=1e-6)
    assert got >= 0


def test_style_loss_matches_gram_recomputation(feature_extractor):
    gen = torch.Generator().manual_seed(5)
    a = torch.rand(1, 3, 16, 16, generator=gen) * 2 - 1
    b = torch.rand(1, 3, 16, 16, generator=gen) * 2 - 1
    expected = 0.0
    for fa, fb in zip(feature_extractor(a), feature_extractor(b)):
        ga = np.asarray(oracle_gram(fa[0].tolist()))
        gb = np.asarray(oracle_gram(fb[0].tolist()))
        expected += np.abs(ga - gb).mean()
    got = style_loss(feature_extractor, a, b).item()
    assert got == pytest.approx(expected, rel=1e-5)
    assert got >= 0


def test_gram_hand_case():
    feature = torch.tensor([[[1.0]], [[0.0]]])
    assert gram(feature).tolist() == [[0.5, 0.0], [0.0, 0.0]]


def test_gram_symmetric_psd_and_permutation_invariant():
    gen = torch.Generator().manual_seed(6)
    for trial in range(10):
        feat = torch.rand(4, 5, 6, generator=gen, dtype=torch.float64)
        g = gram(feat)
        assert (g - g.T).abs().max().item() < 1e-12
        eigvals = torch.linalg.eigvalsh(g)
        assert eigvals.min().item() >= -1e-10
        hand = np.asarray(oracle_gram(feat.tolist()))
        assert np.abs(np.asarray(g) - hand).max() < 1e-10
        # spatial permutation leaves the Gram matrix unchanged
        perm = torch.randperm(30, generator=gen)
        shuffled = feat.reshape(4, 30)[:, perm].reshape(4, 5, 6)
        assert torch.allclose(gram(shuffled), g, atol=1e-12)


class ConstantDisc:
    def __init__(self, value):
        self.value = value

    def __call__(self, x):
        return torch.full((x.shape[0], 1, 4, 4), self.value)


def test_adversarial_losses_uninformative_critic():
    disc = ConstantDisc(0.5)
    candidate = torch.zeros(2, 3, 8, 8)
    reference = torch.ones(2, 3, 8, 8)
    g = adversarial_loss_generator(disc, candidate).item()
    d = adversarial_loss_discriminator(disc, candidate, reference).item()
    assert g == pytest.approx(np.log(2.0), rel=1e-6)
    assert d == pytest.approx(np.log(2.0), rel=1e-6)
    assert g == pytest.approx(d, rel=1e-6)


def test_adversarial_loss_perfect_discriminator():
    class PerfectDisc:
        def __call__(self, x):
            # scores 1 on the synthetic reference (all ones), 0 on candidate
            value = 1.0 - 1e-7 if x.mean() > 0.5 else 1e-7
            return torch.full((x.shape[0], 1, 2, 2), value)

    d = adversarial_loss_discriminator(PerfectDisc(), torch.zeros(1, 3, 4, 4),
                                       torch.ones(1, 3, 4, 4)).item()
    assert 0 < d < 1e-5


def test_adversarial_generator_gradient_nonzero():
    from arcdepth.backbone import Architecture, init_params

    disc = init_params(Architecture(kind="discriminator", base_width=8), seed=8)
    candidate = torch.randn(1, 3, 16, 16).clamp(-0.9, 0.9).requires_grad_(True)
    loss = adversarial_loss_generator(disc, candidate)
    (grad,) = torch.autograd.grad(loss, candidate)
    assert grad.abs().max().item() > 0


def test_adversarial_losses_nonnegative():
    for value in (0.1, 0.5, 0.9):
        disc = ConstantDisc(value)
        assert adversarial_loss_generator(disc, torch.zeros(1, 3, 4, 4)).item() >= 0
        assert adversarial_loss_discriminator(disc, torch.zeros(1, 3, 4, 4),
                                              torch.ones(1, 3, 4, 4)).item() >= 0


def test_inpaint_loss_weighting():
    w = InpaintLossWeights()
    assert (w.lambda_f, w.lambda_style, w.lambda_adv) == (1.0, 1.0, 0.01)
    assert inpaint_loss(0.0, 0.0, 0.0, 0.0, w) == 0.0
    assert inpaint_loss(1.0, 1.0, 1.0, 1.0, w) == pytest.approx(3.01)
    # linear in each component
    base = inpaint_loss(1.0, 2.0, 3.0, 4.0, w)
    assert inpaint_loss(2.0, 2.0, 3.0, 4.0, w) - base == pytest.approx(1.0)
    assert inpaint_loss(1.0, 3.0, 3.0, 4.0, w) - base == pytest.approx(w.lambda_f)
    assert inpaint_loss(1.0, 2.0, 4.0, 4.0, w) - base == pytest.approx(w.lambda_style)
    assert inpaint_loss(1.0, 2.0, 3.0, 5.0, w) - base == pytest.approx(w.lambda_adv)
