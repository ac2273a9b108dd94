"""Real <-> synthetic style translation trained with cycle and identity
constraints plus per-domain adversarial losses.

The real-to-synthetic direction is the one the depth pipeline consumes; its
twin exists to close the cycle. Discriminators are per-domain and separate
from the inpainting discriminator.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn

from .inpaint import adversarial_loss_discriminator, adversarial_loss_generator


@dataclass
class TranslatorPair:
    g_r2s: nn.Module  # real -> synthetic (the direction the pipeline uses)
    g_s2r: nn.Module
    disc_r: nn.Module  # positive class: real images
    disc_s: nn.Module  # positive class: synthetic images


@dataclass(frozen=True)
class TranslateLossWeights:
    lambda_cycle: float = 10.0
    lambda_id: float = 5.0

    def __post_init__(self):
        if min(self.lambda_cycle, self.lambda_id) < 0:
            raise ValueError("loss weights must be >= 0")


def cycle_loss(pair: TranslatorPair, real_batch: torch.Tensor,
               syn_batch: torch.Tensor) -> torch.Tensor:
    """Mean L1 of both round trips, summed."""
    if real_batch.numel() == 0 or syn_batch.numel() == 0:
        raise ValueError("batches must be nonempty")
    real_trip = (pair.g_s2r(pair.g_r2s(real_batch)) - real_batch).abs().mean()
    syn_trip = (pair.g_r2s(pair.g_s2r(syn_batch)) - syn_batch).abs().mean()
    return real_trip + syn_trip


def identity_loss(pair: TranslatorPair, real_batch: torch.Tensor,
                  syn_batch: torch.Tensor) -> torch.Tensor:
    """Each translator should act as identity on its own target domain."""
    if real_batch.numel() == 0 or syn_batch.numel() == 0:
        raise ValueError("batches must be nonempty")
    real_term = (pair.g_s2r(real_batch) - real_batch).abs().mean()
    syn_term = (pair.g_r2s(syn_batch) - syn_batch).abs().mean()
    return real_term + syn_term


def adversarial_terms(pair: TranslatorPair, real_batch: torch.Tensor,
                      syn_batch: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
    """Generator-side adversarial terms for the two translation directions."""
    fake_syn = pair.g_r2s(real_batch)
    fake_real = pair.g_s2r(syn_batch)
    return (adversarial_loss_generator(pair.disc_r, fake_real),
            adversarial_loss_generator(pair.disc_s, fake_syn))


def discriminator_losses(pair: TranslatorPair, real_batch: torch.Tensor,
                         syn_batch: torch.Tensor, fake_real: torch.Tensor,
                         fake_syn: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
    loss_r = adversarial_loss_discriminator(pair.disc_r, fake_real.detach(), real_batch)
    loss_s = adversarial_loss_discriminator(pair.disc_s, fake_syn.detach(), syn_batch)
    return loss_r, loss_s


def translator_loss(cycle, identity, adv_r, adv_s,
                    weights: TranslateLossWeights = TranslateLossWeights()):
    """Weighted total for the generator update."""
    return (weights.lambda_cycle * cycle + weights.lambda_id * identity
            + adv_r + adv_s)


def translate_r2s(pair: TranslatorPair, image: torch.Tensor) -> torch.Tensor:
    """Deterministic real-to-synthetic translation, same shape as input."""
    with torch.no_grad():
        return pair.g_r2s(image)
