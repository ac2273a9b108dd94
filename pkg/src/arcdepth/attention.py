"""Per-pixel keep/remove masks via the Gumbel-sigmoid relaxation.

The attention net emits a log-odds map; adding Gumbel noise and squashing at
temperature tau yields a differentiable quasi-binary mask, and a KL penalty
steers the empirical keep-rate toward the target rho. After its training
stage the transform is switched to noise-free hard thresholding.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch

from .config import ConfigError

KL_EPS = 1e-6


@dataclass(frozen=True)
class GumbelConfig:
    tau: float = 1.0
    rho: float = 0.85
    kl_weight: float = 1.0

    def __post_init__(self):
        if self.tau <= 0:
            raise ConfigError("tau must be > 0")
        if not 0 < self.rho < 1:
            raise ConfigError("rho must lie in (0, 1)")
        if self.kl_weight < 0:
            raise ConfigError("kl_weight must be >= 0")


@dataclass(frozen=True)
class Mask:
    """Keep/remove map: 1 keeps a pixel, 0 removes it.

    Soft masks hold relaxed values in [0, 1] (interior in exact arithmetic;
    float saturation can reach the endpoints at low tau). Hard masks are
    exactly {0, 1}.
    """

    values: torch.Tensor
    mode: str  # soft | hard

    def __post_init__(self):
        if self.mode not in ("soft", "hard"):
            raise ValueError(f"unknown mask mode {self.mode!r}")
        v = self.values
        if not torch.isfinite(v).all():
            raise ValueError("mask values must be finite")
        if self.mode == "hard":
            if not ((v == 0) | (v == 1)).all():
                raise ValueError("hard mask values must be exactly 0 or 1")
        elif v.min() < 0 or v.max() > 1:
            raise ValueError("soft mask values must lie within [0, 1]")

    @property
    def is_hard(self) -> bool:
        return self.mode == "hard"


def sample_gumbel_noise(height: int, width: int, seed: int) -> torch.Tensor:
    """Standard Gumbel draws g = -log(-log(u)), u uniform in (0, 1)."""
    gen = torch.Generator().manual_seed(seed & 0x7FFFFFFFFFFF)
    u = torch.rand(height, width, generator=gen).clamp_(min=1e-12)
    return -torch.log(-torch.log(u))


def gumbel_sigmoid(log_alpha: torch.Tensor, noise: torch.Tensor, tau: float) -> Mask:
    if tau <= 0:
        raise ValueError("tau must be > 0")
    return Mask(values=torch.sigmoid((log_alpha + noise) / tau), mode="soft")


def harden(mask: Mask) -> Mask:
    """Threshold at 0.5, ties keep the pixel; gradients do not flow through."""
    values = (mask.values.detach() >= 0.5).to(mask.values.dtype)
    return Mask(values=values, mode="hard")


def keep_rate(mask: Mask) -> torch.Tensor:
    """Empirical fraction of kept pixels; differentiable for soft masks."""
    return mask.values.mean()


def kl_sparsity_loss(xi, rho: float):
    """KL between Bernoulli(rho) and Bernoulli(xi); zero iff xi == rho."""
    if not 0 < rho < 1:
        raise ValueError("rho must lie in (0, 1)")
    if not isinstance(xi, torch.Tensor):
        xi = torch.as_tensor(xi, dtype=torch.float64)
    xi = xi.clamp(KL_EPS, 1.0 - KL_EPS)
    rho_t = torch.as_tensor(rho, dtype=xi.dtype)
    return rho_t * torch.log(rho_t / xi) + (1 - rho_t) * torch.log((1 - rho_t) / (1 - xi))


def save_mask_png(mask: Mask, path) -> None:
    """Export a mask as a 0/255 grayscale PNG (soft masks are thresholded)."""
    import numpy as np
    from PIL import Image

    values = np.asarray(mask.values.detach().cpu()).squeeze()
    if values.ndim != 2:
        raise ValueError("expected a single H x W mask")
    Image.fromarray(np.where(values >= 0.5, 255, 0).astype(np.uint8)).save(path)


def attend(net, image: torch.Tensor, cfg: GumbelConfig, train_mode: bool,
           noise_seed: int = 0) -> Mask:
    """Run the attention net and turn its log-odds map into a mask.

    Training samples fresh Gumbel noise per call; inference thresholds the
    noise-free probabilities and returns a hard mask.
    """
    log_alpha = net(image)  # B x 1 x H x W logits
    if train_mode:
        b, _, h, w = log_alpha.shape
        noise = torch.stack([
            sample_gumbel_noise(h, w, noise_seed + i) for i in range(b)
        ]).unsqueeze(1).to(log_alpha.dtype)
        return gumbel_sigmoid(log_alpha, noise, cfg.tau)
    return harden(Mask(values=torch.sigmoid(log_alpha.detach()), mode="soft"))
