"""Depth prediction head: supervised L1 loss over valid pixels and the
inference wrapper that packages capped positive depth maps."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch


@dataclass(frozen=True)
class DepthPrediction:
    values: np.ndarray  # H x W float32, meters, in (0, cap]
    cap: float

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float32)
        if not np.isfinite(v).all() or v.min() <= 0 or v.max() > self.cap:
            raise ValueError("depth predictions must be finite and in (0, cap]")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)


def depth_l1_loss(pred: torch.Tensor, target: torch.Tensor,
                  valid: torch.Tensor) -> torch.Tensor:
    """Mean |pred - target| over valid pixels only."""
    if pred.shape != target.shape or valid.shape != pred.shape:
        raise ValueError(
            f"shape mismatch: pred {tuple(pred.shape)}, target {tuple(target.shape)}, "
            f"valid {tuple(valid.shape)}")
    valid = valid.bool()
    n = int(valid.sum())
    if n == 0:
        raise ValueError("no valid pixels for depth loss")
    diff = (pred - target).abs()
    return (diff * valid.to(diff.dtype)).sum() / n


def mixed_depth_loss(pred_real, target_real, valid_real,
                     pred_syn, target_syn, valid_syn) -> torch.Tensor:
    """Mean of per-domain means, so the small real set is not drowned out."""
    return 0.5 * (depth_l1_loss(pred_real, target_real, valid_real)
                  + depth_l1_loss(pred_syn, target_syn, valid_syn))


def predict(net, image: torch.Tensor) -> DepthPrediction:
    """Run the depth net on one 3 x H x W (or 1 x 3 x H x W) image."""
    if image.dim() == 3:
        image = image.unsqueeze(0)
    with torch.no_grad():
        out = net(image)
    return DepthPrediction(values=out[0, 0].cpu().numpy(), cap=net.arch.depth_max)


def save_depth_pfm(values: np.ndarray, path) -> None:
    from .pfm import write_pfm

    write_pfm(path, np.asarray(values, dtype=np.float32))


def colorize_depth(values: np.ndarray, cap: float, cmap: str = "magma") -> np.ndarray:
    """Map a depth raster to an 8-bit RGB image for qualitative panels."""
    from matplotlib import colormaps

    normalized = np.clip(np.asarray(values, dtype=np.float64) / cap, 0.0, 1.0)
    rgba = colormaps[cmap](normalized)
    return (rgba[..., :3] * 255).astype(np.uint8)


def save_depth_png(values: np.ndarray, cap: float, path, cmap: str = "magma") -> None:
    from PIL import Image

    Image.fromarray(colorize_depth(values, cap, cmap)).save(path)
