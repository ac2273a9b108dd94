"""Shared network primitives: encoder-decoder generator, skip-connected depth
net, patch discriminator, and a frozen convolutional feature pyramid.

All forwards are pure functions of (weights, input) and a network is fully
described by its :class:`Architecture`, so checkpoints are self-describing.
Desk-scale defaults (2 downsampling stages, 2 residual blocks, base width 16)
train in minutes on CPU.
"""

from __future__ import annotations

import hashlib
from dataclasses import asdict, dataclass

import numpy as np
import torch
import torch.nn as nn

from .config import ConfigError

CHECKPOINT_VERSION = 1

# Discriminator scores are clamped inside (0, 1) so log terms stay finite.
SCORE_EPS = 1e-6


@dataclass(frozen=True)
class Architecture:
    """Descriptor that fully determines a network's parameter shapes."""

    kind: str  # generator | depth | discriminator | features
    in_channels: int = 3
    out_channels: int = 3
    base_width: int = 16
    n_down: int = 2
    n_res: int = 2
    head: str = "tanh"  # generator head: tanh (image-valued) or linear (logits)
    depth_max: float = 10.0  # depth kind only
    feature_levels: int = 3  # features kind only

    def __post_init__(self):
        if self.kind not in ("generator", "depth", "discriminator", "features"):
            raise ConfigError(f"unknown network kind {self.kind!r}")
        if min(self.in_channels, self.out_channels, self.base_width) <= 0:
            raise ConfigError("channel counts must be positive")
        if self.n_down < 1 or self.n_res < 0:
            raise ConfigError("n_down must be >= 1 and n_res >= 0")
        if self.head not in ("tanh", "linear"):
            raise ConfigError(f"unknown generator head {self.head!r}")
        if self.kind == "depth" and self.depth_max <= 0:
            raise ConfigError("depth_max must be positive")
        if self.kind == "features" and self.feature_levels < 1:
            raise ConfigError("feature_levels must be >= 1")


class ResidualBlock(nn.Module):
    def __init__(self, channels):
        super().__init__()
        self.block = nn.Sequential(
            nn.ReflectionPad2d(1),
            nn.Conv2d(channels, channels, 3),
            nn.InstanceNorm2d(channels),
            nn.ReLU(inplace=True),
            nn.ReflectionPad2d(1),
            nn.Conv2d(channels, channels, 3),
            nn.InstanceNorm2d(channels),
        )

    def forward(self, x):
        return x + self.block(x)


def _conv_in_relu(cin, cout, stride=1):
    return nn.Sequential(
        nn.Conv2d(cin, cout, 3, stride=stride, padding=1),
        nn.InstanceNorm2d(cout),
        nn.ReLU(inplace=True),
    )


def _up_conv(cin, cout):
    return nn.Sequential(
        nn.Upsample(scale_factor=2, mode="nearest"),
        nn.Conv2d(cin, cout, 3, padding=1),
        nn.InstanceNorm2d(cout),
        nn.ReLU(inplace=True),
    )


class Generator(nn.Module):
    """Encoder-decoder image generator; tanh head squashes output to (-1, 1)."""

    def __init__(self, arch: Architecture):
        super().__init__()
        self.arch = arch
        b = arch.base_width
        layers = [
            nn.ReflectionPad2d(3),
            nn.Conv2d(arch.in_channels, b, 7),
            nn.InstanceNorm2d(b),
            nn.ReLU(inplace=True),
        ]
        width = b
        for _ in range(arch.n_down):
            layers.append(_conv_in_relu(width, width * 2, stride=2))
            width *= 2
        layers.extend(ResidualBlock(width) for _ in range(arch.n_res))
        for _ in range(arch.n_down):
            layers.append(_up_conv(width, width // 2))
            width //= 2
        layers.extend([nn.ReflectionPad2d(3), nn.Conv2d(width, arch.out_channels, 7)])
        if arch.head == "tanh":
            layers.append(nn.Tanh())
        self.model = nn.Sequential(*layers)

    def forward(self, x):
        _check_input(x, self.arch)
        return self.model(x)


class DepthNet(nn.Module):
    """Generator variant with encoder-decoder skips; output in (0, depth_max)."""

    def __init__(self, arch: Architecture):
        super().__init__()
        self.arch = arch
        b = arch.base_width
        self.enc0 = nn.Sequential(
            nn.ReflectionPad2d(3),
            nn.Conv2d(arch.in_channels, b, 7),
            nn.InstanceNorm2d(b),
            nn.ReLU(inplace=True),
        )
        downs, width = [], b
        for _ in range(arch.n_down):
            downs.append(_conv_in_relu(width, width * 2, stride=2))
            width *= 2
        self.downs = nn.ModuleList(downs)
        self.res = nn.Sequential(*[ResidualBlock(width) for _ in range(arch.n_res)])
        ups, fuses = [], []
        for _ in range(arch.n_down):
            ups.append(_up_conv(width, width // 2))
            fuses.append(_conv_in_relu(width, width // 2))  # after skip concat
            width //= 2
        self.ups = nn.ModuleList(ups)
        self.fuses = nn.ModuleList(fuses)
        self.head = nn.Sequential(nn.ReflectionPad2d(3), nn.Conv2d(width, 1, 7))

    def forward(self, x):
        _check_input(x, self.arch)
        skips = [self.enc0(x)]
        for down in self.downs:
            skips.append(down(skips[-1]))
        h = self.res(skips[-1])
        for i, (up, fuse) in enumerate(zip(self.ups, self.fuses)):
            h = up(h)
            h = fuse(torch.cat([h, skips[-2 - i]], dim=1))
        return torch.sigmoid(self.head(h)) * self.arch.depth_max


class PatchDiscriminator(nn.Module):
    """Patch classifier emitting per-patch scores strictly inside (0, 1).

    ``forward_calls`` counts evaluations so training stages can be audited
    for adversarial-loss usage.
    """

    def __init__(self, arch: Architecture):
        super().__init__()
        self.arch = arch
        b = arch.base_width
        layers = [nn.Conv2d(arch.in_channels, b, 4, stride=2, padding=1),
                  nn.LeakyReLU(0.2, inplace=True)]
        width = b
        for _ in range(arch.n_down - 1):
            layers.extend([
                nn.Conv2d(width, width * 2, 4, stride=2, padding=1),
                nn.InstanceNorm2d(width * 2),
                nn.LeakyReLU(0.2, inplace=True),
            ])
            width *= 2
        layers.append(nn.Conv2d(width, 1, 3, padding=1))
        self.model = nn.Sequential(*layers)
        self.forward_calls = 0

    def forward(self, x):
        _check_input(x, self.arch)
        self.forward_calls += 1
        return torch.clamp(torch.sigmoid(self.model(x)), SCORE_EPS, 1.0 - SCORE_EPS)


@dataclass
class FeaturePyramid:
    """Ordered multi-scale feature maps, spatial size non-increasing with level."""

    levels: tuple

    def __post_init__(self):
        if len(self.levels) < 1:
            raise ValueError("pyramid needs at least one level")
        sizes = [lv.shape[-2] * lv.shape[-1] for lv in self.levels]
        if any(later > earlier for later, earlier in zip(sizes[1:], sizes)):
            raise ValueError("pyramid spatial sizes must be non-increasing")

    def __iter__(self):
        return iter(self.levels)

    def __len__(self):
        return len(self.levels)


class FeatureExtractor(nn.Module):
    """Fixed seed-initialized pyramid standing in for a pretrained feature net.

    Weights are frozen at construction; any trained extractor with the same
    interface can be plugged in instead.
    """

    def __init__(self, arch: Architecture):
        super().__init__()
        self.arch = arch
        b = arch.base_width
        stages, cin = [], arch.in_channels
        for _ in range(arch.feature_levels):
            stages.append(nn.Sequential(
                nn.Conv2d(cin, b, 3, stride=2, padding=1),
                nn.ReLU(inplace=True),
            ))
            cin, b = b, b * 2
        self.stages = nn.ModuleList(stages)

    def forward(self, x) -> FeaturePyramid:
        _check_input(x, self.arch)
        levels = []
        h = x
        for stage in self.stages:
            h = stage(h)
            levels.append(h)
        return FeaturePyramid(levels=tuple(levels))


_KIND_TO_CLASS = {
    "generator": Generator,
    "depth": DepthNet,
    "discriminator": PatchDiscriminator,
    "features": FeatureExtractor,
}


def _check_input(x, arch):
    if x.dim() != 4:
        raise ValueError(f"expected B x C x H x W input, got shape {tuple(x.shape)}")
    if x.shape[1] != arch.in_channels:
        raise ValueError(
            f"{arch.kind} expects {arch.in_channels} input channels, got {x.shape[1]}")


def build_network(arch: Architecture) -> nn.Module:
    return _KIND_TO_CLASS[arch.kind](arch)


def init_params(arch: Architecture, seed: int) -> nn.Module:
    """Build a network with weights drawn deterministically from ``seed``.

    Conv weights ~ N(0, 0.02), biases zero, independent of global RNG state.
    """
    net = build_network(arch)
    gen = torch.Generator().manual_seed(seed & 0x7FFFFFFFFFFF)
    with torch.no_grad():
        for name, p in net.named_parameters():
            if name.endswith("bias"):
                p.zero_()
            else:
                p.copy_(torch.randn(p.shape, generator=gen) * 0.02)
    if arch.kind == "features":
        for p in net.parameters():
            p.requires_grad_(False)
    return net


def param_count(net: nn.Module) -> int:
    return sum(p.numel() for p in net.parameters())


def hash_params(net: nn.Module) -> str:
    """SHA-256 over all named parameters; bitwise freeze audits compare these."""
    digest = hashlib.sha256()
    for name, p in sorted(net.state_dict().items()):
        digest.update(name.encode())
        digest.update(p.detach().cpu().numpy().tobytes())
    return digest.hexdigest()


def save_params(net: nn.Module, path) -> None:
    torch.save({
        "version": CHECKPOINT_VERSION,
        "arch": asdict(net.arch),
        "state": net.state_dict(),
    }, path)


def load_params(path) -> nn.Module:
    payload = torch.load(path, weights_only=True)
    if "version" not in payload:
        raise ValueError(f"{path}: missing checkpoint version field")
    if payload["version"] != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {payload['version']}")
    net = build_network(Architecture(**payload["arch"]))
    net.load_state_dict(payload["state"])
    return net


def image_to_tensor(image) -> torch.Tensor:
    """H x W x 3 [-1, 1] array -> 3 x H x W float tensor."""
    arr = np.ascontiguousarray(np.asarray(image, dtype=np.float32).transpose(2, 0, 1))
    return torch.from_numpy(arr)


def batch_images(samples) -> torch.Tensor:
    return torch.stack([image_to_tensor(s.image) for s in samples])


def batch_depths(samples) -> torch.Tensor:
    return torch.from_numpy(np.stack([s.depth for s in samples]).astype(np.float32))


def batch_valids(samples) -> torch.Tensor:
    return torch.from_numpy(np.stack([s.valid for s in samples]))
