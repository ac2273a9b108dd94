"""Hole filling for removed regions: the composition rule, random pretraining
masks, and the reconstruction / perceptual / style / adversarial losses.

Kept pixels pass through composition bit-exact; only removed pixels take the
inpainter's fill. Discriminators score synthetic images as the positive
class, so the generator term rewards fills that look synthetic.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch

from .attention import Mask


@dataclass(frozen=True)
class InpaintLossWeights:
    lambda_f: float = 1.0
    lambda_style: float = 1.0
    lambda_adv: float = 0.01

    def __post_init__(self):
        if min(self.lambda_f, self.lambda_style, self.lambda_adv) < 0:
            raise ValueError("loss weights must be >= 0")


def _mask_like(mask: Mask, image: torch.Tensor) -> torch.Tensor:
    """Broadcast H x W (or B x 1 x H x W) mask values over image channels."""
    v = mask.values
    if v.shape[-2:] != image.shape[-2:]:
        raise ValueError(f"mask {tuple(v.shape[-2:])} does not match image "
                         f"{tuple(image.shape[-2:])}")
    if image.dim() == 3:  # C x H x W
        v = v.reshape(-1, *v.shape[-2:])
        if v.shape[0] != 1:
            raise ValueError("batched mask cannot gate an unbatched image")
    elif image.dim() == 4:  # B x C x H x W
        if v.dim() == 2:
            v = v.unsqueeze(0).unsqueeze(0)
        if v.shape[0] not in (1, image.shape[0]):
            raise ValueError("mask batch does not match image batch")
    else:
        raise ValueError(f"expected 3- or 4-dim image, got {image.dim()}")
    return v.to(image.dtype)


def gate(mask: Mask, image: torch.Tensor) -> torch.Tensor:
    """Remove masked-out pixels by elementwise gating (removed pixels -> 0)."""
    return _mask_like(mask, image) * image


def compose(mask: Mask, image: torch.Tensor, fill: torch.Tensor) -> torch.Tensor:
    """Keep masked-in pixels from ``image``, take removed pixels from ``fill``.

    Hard masks leave kept pixels bit-identical; soft masks blend convexly.
    """
    if image.shape != fill.shape:
        raise ValueError(f"image {tuple(image.shape)} and fill {tuple(fill.shape)} differ")
    m = _mask_like(mask, image)
    return m * image + (1.0 - m) * fill


def random_training_mask(height: int, width: int, rho: float, seed: int) -> Mask:
    """Hard mask removing ~(1 - rho) of pixels as a union of random rectangles.

    Rectangles are capped at ~1/64 of the image so the achieved keep-rate
    lands within +/-0.03 of rho for images of 32 px and up.
    """
    if not 0 < rho < 1:
        raise ValueError("rho must lie in (0, 1)")
    gen = torch.Generator().manual_seed(seed & 0x7FFFFFFFFFFF)
    values = torch.ones(height, width)
    target_removed = (1.0 - rho) * height * width
    max_h = max(2, height // 8)
    max_w = max(2, width // 8)
    while float((values == 0).sum()) < target_removed:
        rh = int(torch.randint(1, max_h + 1, (1,), generator=gen))
        rw = int(torch.randint(1, max_w + 1, (1,), generator=gen))
        y0 = int(torch.randint(0, height - rh + 1, (1,), generator=gen))
        x0 = int(torch.randint(0, width - rw + 1, (1,), generator=gen))
        values[y0 : y0 + rh, x0 : x0 + rw] = 0.0
    return Mask(values=values, mode="hard")


def rgb_reconstruction_loss(output: torch.Tensor, original: torch.Tensor,
                            removed_only: Mask | None = None) -> torch.Tensor:
    """Mean absolute error between the inpainter output and the original.

    By default the mean runs over all pixels; pass ``removed_only`` to
    restrict it to removed (mask == 0) pixels.
    """
    if output.shape != original.shape:
        raise ValueError("shape mismatch between output and original")
    diff = (output - original).abs()
    if removed_only is None:
        return diff.mean()
    removed = 1.0 - _mask_like(removed_only, output)
    denom = removed.expand_as(diff).sum().clamp(min=1.0)
    return (diff * removed).sum() / denom


def perceptual_loss(extractor, a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    """Sum over pyramid levels of mean absolute feature differences."""
    total = 0.0
    for fa, fb in zip(extractor(a), extractor(b)):
        total = total + (fa - fb).abs().mean()
    return total


def gram(feature: torch.Tensor) -> torch.Tensor:
    """Channel inner-product matrix, normalized by C*H*W.

    Accepts C x H x W (returns C x C) or B x C x H x W (returns B x C x C).
    """
    if feature.dim() == 3:
        return gram(feature.unsqueeze(0)).squeeze(0)
    if feature.dim() != 4 or feature.numel() == 0:
        raise ValueError(f"expected nonempty (B x) C x H x W feature, got "
                         f"{tuple(feature.shape)}")
    b, c, h, w = feature.shape
    flat = feature.reshape(b, c, h * w)
    return flat @ flat.transpose(1, 2) / (c * h * w)


def style_loss(extractor, a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    """Sum over pyramid levels of mean absolute Gram-matrix differences."""
    total = 0.0
    for fa, fb in zip(extractor(a), extractor(b)):
        total = total + (gram(fa) - gram(fb)).abs().mean()
    return total


def adversarial_loss_generator(disc, candidate: torch.Tensor) -> torch.Tensor:
    """Nonsaturating generator term: reward candidates scored as synthetic."""
    return -torch.log(disc(candidate)).mean()


def adversarial_loss_discriminator(disc, candidate: torch.Tensor,
                                   reference: torch.Tensor) -> torch.Tensor:
    """Discriminator term; ``reference`` is the positive (synthetic) class.

    Halved sum of the two negative-log terms, so an uninformative critic
    scores the same loss on both players and a perfect one approaches 0.
    """
    loss_ref = -torch.log(disc(reference)).mean()
    loss_cand = -torch.log(1.0 - disc(candidate)).mean()
    return 0.5 * (loss_ref + loss_cand)


def inpaint_loss(rec, perceptual, style, adversarial,
                 weights: InpaintLossWeights = InpaintLossWeights()):
    """Weighted total of the four inpainting terms."""
    return (rec + weights.lambda_f * perceptual + weights.lambda_style * style
            + weights.lambda_adv * adversarial)
