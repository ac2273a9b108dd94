"""Inference-time composition: translate, attend/remove, complete, predict.

A pipeline bundles the trained networks and exposes deterministic depth
prediction for a single sample or batch. Any of the translator, attention,
or inpainting stages may be absent, which yields the ablated variants and
the plain depth-only baseline.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn as nn

from .attention import Mask, attend, GumbelConfig
from .backbone import image_to_tensor
from .inpaint import compose, gate


@dataclass
class PipelineOutputs:
    translated: torch.Tensor  # B x 3 x H x W
    mask: Mask  # hard, B x 1 x H x W
    gated: torch.Tensor
    completed: torch.Tensor
    depth: torch.Tensor  # B x 1 x H x W


@dataclass
class ArcPipeline:
    depth_net: nn.Module
    attention_net: nn.Module | None = None
    translator: nn.Module | None = None  # real -> synthetic generator
    inpainter: nn.Module | None = None

    def run(self, images: torch.Tensor) -> PipelineOutputs:
        """Full forward pass on a B x 3 x H x W batch, no gradients."""
        if images.dim() == 3:
            images = images.unsqueeze(0)
        b, _, h, w = images.shape
        with torch.no_grad():
            translated = self.translator(images) if self.translator else images
            if self.attention_net is not None:
                # Attention reads the untranslated image; the mask gates the
                # translated one.
                mask = attend(self.attention_net, images, GumbelConfig(),
                              train_mode=False)
            else:
                mask = Mask(values=torch.ones(b, 1, h, w), mode="hard")
            gated = gate(mask, translated)
            if self.inpainter is not None:
                completed = compose(mask, translated, self.inpainter(gated))
            else:
                completed = gated
            depth = self.depth_net(completed)
        return PipelineOutputs(translated=translated, mask=mask, gated=gated,
                               completed=completed, depth=depth)

    def predict_depth(self, sample) -> np.ndarray:
        """H x W depth map for one SceneSample."""
        out = self.run(image_to_tensor(sample.image))
        return out.depth[0, 0].cpu().numpy()

    def predict_mask(self, sample) -> np.ndarray:
        out = self.run(image_to_tensor(sample.image))
        return out.mask.values[0, 0].cpu().numpy()
