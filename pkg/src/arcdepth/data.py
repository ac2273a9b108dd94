"""Procedural two-domain desk-scale depth benchmark plus on-disk dataset IO.

Scenes are a back wall and a few fronto-parallel flat-shaded rectangles with
exact per-pixel depth. Surface brightness follows a fixed monotone shading law
in depth, so depth is recoverable from a single image. The "real" domain adds
clutter sprites (high-frequency textures that the synthetic domain never
emits, placed just in front of the surface they occlude) and a per-image
photometric shift (gamma plus additive noise). Both domains share the same
base scene for a given (seed, index), so the benchmark is paired.

Disk layout: ``<root>/<domain>/images/<id>.png`` (8-bit), ``.../depth/<id>.pfm``
(float32), ``.../valid/<id>.png`` (0/255), and ``<root>/manifest.tsv``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .config import ConfigError
from .pfm import read_pfm, write_pfm

SPRITE_TEXTURES = ("checker", "stripes", "speckle")

# Brightness drops linearly with depth; the floor keeps far surfaces visible.
SHADING_FLOOR = 0.15


class Domain(str, enum.Enum):
    SYNTHETIC = "synthetic"
    REAL = "real"


class DatasetError(RuntimeError):
    """Raised when an on-disk dataset is missing, corrupt, or inconsistent."""


@dataclass(frozen=True)
class SceneSample:
    """One image/depth/validity triple. Arrays are read-only after construction."""

    image: np.ndarray  # H x W x 3 float32 in [-1, 1]
    depth: np.ndarray  # H x W float32, meters, > 0
    valid: np.ndarray  # H x W bool
    domain: Domain
    id: str
    sprite_textures: tuple[str, ...] = ()

    def __post_init__(self):
        image = np.asarray(self.image, dtype=np.float32)
        depth = np.asarray(self.depth, dtype=np.float32)
        valid = np.asarray(self.valid, dtype=bool)
        if image.ndim != 3 or image.shape[2] != 3:
            raise ValueError(f"image must be H x W x 3, got {image.shape}")
        if depth.shape != image.shape[:2] or valid.shape != image.shape[:2]:
            raise ValueError(
                f"raster size mismatch: image {image.shape[:2]}, "
                f"depth {depth.shape}, valid {valid.shape}"
            )
        if not np.isfinite(image).all() or image.min() < -1 or image.max() > 1:
            raise ValueError("image values must be finite and within [-1, 1]")
        d = depth[valid]
        if d.size and (not np.isfinite(d).all() or (d <= 0).any()):
            raise ValueError("depth must be positive and finite where valid")
        for arr, name in ((image, "image"), (depth, "depth"), (valid, "valid")):
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @property
    def height(self) -> int:
        return self.image.shape[0]

    @property
    def width(self) -> int:
        return self.image.shape[1]


@dataclass(frozen=True)
class GeneratorConfig:
    height: int = 64
    width: int = 64
    n_samples: int = 50
    clutter_count_range: tuple[int, int] = (1, 4)
    gamma_range: tuple[float, float] = (0.7, 1.3)
    noise_std: float = 0.02
    depth_range: tuple[float, float] = (1.0, 10.0)
    seed: int = 0

    def __post_init__(self):
        if self.height < 8 or self.width < 8:
            raise ConfigError("height and width must be at least 8 pixels")
        if self.n_samples < 1:
            raise ConfigError("n_samples must be >= 1")
        lo, hi = self.clutter_count_range
        if lo < 0 or hi < lo:
            raise ConfigError(f"clutter_count_range empty: {self.clutter_count_range}")
        glo, ghi = self.gamma_range
        if glo <= 0 or ghi < glo:
            raise ConfigError(f"gamma_range invalid: {self.gamma_range}")
        if self.noise_std < 0:
            raise ConfigError("noise_std must be >= 0")
        dlo, dhi = self.depth_range
        if dlo <= 0 or dhi <= dlo:
            raise ConfigError(f"depth_range must be strictly positive: {self.depth_range}")


def _shade(depth_value: float, depth_range: tuple[float, float]) -> float:
    """Brightness of a surface at the given depth: near = bright, far = dim."""
    dlo, dhi = depth_range
    t = (depth_value - dlo) / (dhi - dlo)
    return 1.0 - (1.0 - SHADING_FLOOR) * float(np.clip(t, 0.0, 1.0))


def _paint_rect(image, depth, rng, cfg, depth_value):
    h, w = depth.shape
    rh = int(rng.integers(h // 6, h // 2 + 1))
    rw = int(rng.integers(w // 6, w // 2 + 1))
    y0 = int(rng.integers(0, h - rh + 1))
    x0 = int(rng.integers(0, w - rw + 1))
    hue = rng.uniform(0.3, 1.0, size=3)
    color = hue * _shade(depth_value, cfg.depth_range)
    image[y0 : y0 + rh, x0 : x0 + rw] = color
    depth[y0 : y0 + rh, x0 : x0 + rw] = depth_value


def _sprite_mask(rng, h, w):
    """Boolean footprint of one clutter sprite: an ellipse or a triangle."""
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    r = float(rng.uniform(min(h, w) / 16, min(h, w) / 6))
    cy = float(rng.uniform(r, h - r))
    cx = float(rng.uniform(r, w - r))
    if rng.random() < 0.5:
        ry = r * float(rng.uniform(0.6, 1.4))
        mask = ((xx - cx) / r) ** 2 + ((yy - cy) / ry) ** 2 <= 1.0
    else:
        # Vertex angles stay well separated so the triangle is never a sliver.
        start = rng.uniform(0, 2 * np.pi)
        angles = np.sort((start + np.array([0.0, 2 * np.pi / 3, 4 * np.pi / 3])
                          + rng.uniform(-0.4, 0.4, size=3)) % (2 * np.pi))
        vy = cy + 1.4 * r * np.sin(angles)
        vx = cx + 1.4 * r * np.cos(angles)
        mask = np.ones((h, w), dtype=bool)
        for i in range(3):
            j = (i + 1) % 3
            cross = (vx[j] - vx[i]) * (yy - vy[i]) - (vy[j] - vy[i]) * (xx - vx[i])
            mask &= cross >= 0
    return mask, (int(round(cy)), int(round(cx)))


def _texture_patch(rng, h, w, kind):
    """High-frequency sprite texture in [0, 1] color space."""
    c1 = rng.uniform(0.0, 1.0, size=3)
    c2 = rng.uniform(0.0, 1.0, size=3)
    yy, xx = np.mgrid[0:h, 0:w]
    if kind == "checker":
        period = int(rng.integers(2, 5))
        sel = ((yy // period) + (xx // period)) % 2 == 0
    elif kind == "stripes":
        freq = float(rng.uniform(1.0, 2.5))
        theta = float(rng.uniform(0, np.pi))
        phase = float(rng.uniform(0, 2 * np.pi))
        sel = np.sin(freq * (np.cos(theta) * xx + np.sin(theta) * yy) + phase) > 0
    elif kind == "speckle":
        sel = rng.random((h, w)) > 0.5
    else:
        raise ValueError(f"unknown sprite texture {kind!r}")
    patch = np.where(sel[..., None], c1, c2)
    return patch


def generate_scene(config: GeneratorConfig, index: int, domain: Domain) -> SceneSample:
    """Deterministically render sample ``index`` of the given domain.

    The base scene depends only on (seed, index); the real domain then
    composites clutter and applies the photometric shift on top.
    """
    if not isinstance(config, GeneratorConfig):
        raise ConfigError("config must be a GeneratorConfig")
    if index < 0 or index >= config.n_samples:
        raise ValueError(f"index {index} out of range [0, {config.n_samples})")
    domain = Domain(domain)
    h, w = config.height, config.width
    dlo, dhi = config.depth_range

    scene_rng = np.random.default_rng([config.seed & 0x7FFFFFFF, index, 11])
    wall_depth = float(scene_rng.uniform(0.7 * dhi, dhi))
    image = np.empty((h, w, 3), dtype=np.float64)
    hue = scene_rng.uniform(0.3, 1.0, size=3)
    image[:] = hue * _shade(wall_depth, config.depth_range)
    depth = np.full((h, w), wall_depth, dtype=np.float64)

    n_rects = int(scene_rng.integers(2, 7))
    rect_depths = np.sort(scene_rng.uniform(dlo, 0.95 * wall_depth, size=n_rects))[::-1]
    for depth_value in rect_depths:  # painter's order: far to near
        _paint_rect(image, depth, scene_rng, config, float(depth_value))

    textures: list[str] = []
    if domain is Domain.REAL:
        real_rng = np.random.default_rng([config.seed & 0x7FFFFFFF, index, 23])
        n_sprites = int(real_rng.integers(config.clutter_count_range[0],
                                          config.clutter_count_range[1] + 1))
        for _ in range(n_sprites):
            mask, (cy, cx) = _sprite_mask(real_rng, h, w)
            kind = SPRITE_TEXTURES[int(real_rng.integers(0, len(SPRITE_TEXTURES)))]
            patch = _texture_patch(real_rng, h, w, kind)
            # Clutter sits just in front of whatever surface it occludes.
            sprite_depth = float(np.clip(depth[cy, cx] * real_rng.uniform(0.7, 0.95),
                                         dlo, dhi))
            image[mask] = patch[mask]
            depth[mask] = sprite_depth
            textures.append(kind)
        gamma = float(real_rng.uniform(*config.gamma_range))
        image = np.power(np.clip(image, 0.0, 1.0), gamma)
        image = 2.0 * image - 1.0
        if config.noise_std > 0:
            image = image + real_rng.normal(0.0, config.noise_std, size=image.shape)
        image = np.clip(image, -1.0, 1.0)
    else:
        image = 2.0 * np.clip(image, 0.0, 1.0) - 1.0

    return SceneSample(
        image=image.astype(np.float32),
        depth=depth.astype(np.float32),
        valid=np.ones((h, w), dtype=bool),
        domain=domain,
        id=f"{domain.value}-{index:05d}",
        sprite_textures=tuple(textures),
    )


def generate_dataset(config: GeneratorConfig, domain: Domain) -> list[SceneSample]:
    return [generate_scene(config, i, domain) for i in range(config.n_samples)]


def _image_to_u8(image: np.ndarray) -> np.ndarray:
    return np.clip(np.round((image.astype(np.float64) + 1.0) * 127.5), 0, 255).astype(np.uint8)


def _u8_to_image(u8: np.ndarray) -> np.ndarray:
    return (u8.astype(np.float32) / 127.5 - 1.0).clip(-1.0, 1.0)


def save_dataset(samples: list[SceneSample], directory: str | Path) -> None:
    root = Path(directory)
    rows = []
    for s in samples:
        base = root / s.domain.value
        for sub in ("images", "depth", "valid"):
            (base / sub).mkdir(parents=True, exist_ok=True)
        Image.fromarray(_image_to_u8(s.image)).save(base / "images" / f"{s.id}.png")
        write_pfm(base / "depth" / f"{s.id}.pfm", s.depth)
        Image.fromarray(np.where(s.valid, 255, 0).astype(np.uint8)).save(
            base / "valid" / f"{s.id}.png")
        rows.append(f"{s.id}\t{s.domain.value}\t{s.height}\t{s.width}")
    root.mkdir(parents=True, exist_ok=True)
    (root / "manifest.tsv").write_text(
        "id\tdomain\theight\twidth\n" + "".join(r + "\n" for r in rows))


def load_dataset(directory: str | Path) -> list[SceneSample]:
    root = Path(directory)
    manifest = root / "manifest.tsv"
    if not manifest.exists():
        raise DatasetError(f"no samples found: missing {manifest}")
    lines = manifest.read_text().splitlines()
    samples: list[SceneSample] = []
    for line in lines[1:]:
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 4:
            raise DatasetError(f"corrupt manifest row: {line!r}")
        sid, domain_name, h, w = parts[0], parts[1], int(parts[2]), int(parts[3])
        base = root / domain_name
        img_path = base / "images" / f"{sid}.png"
        depth_path = base / "depth" / f"{sid}.pfm"
        valid_path = base / "valid" / f"{sid}.png"
        for p in (img_path, depth_path, valid_path):
            if not p.exists():
                raise DatasetError(f"missing file for sample {sid!r}: {p}")
        image = _u8_to_image(np.asarray(Image.open(img_path).convert("RGB")))
        depth = read_pfm(depth_path)
        valid = np.asarray(Image.open(valid_path).convert("L")) >= 128
        if image.shape[:2] != (h, w) or depth.shape != (h, w) or valid.shape != (h, w):
            raise DatasetError(
                f"dimension mismatch for sample {sid!r}: manifest says {(h, w)}, "
                f"got image {image.shape[:2]}, depth {depth.shape}, valid {valid.shape}")
        try:
            samples.append(SceneSample(image=image, depth=depth, valid=valid,
                                       domain=Domain(domain_name), id=sid))
        except ValueError as exc:
            raise DatasetError(f"corrupt sample {sid!r}: {exc}") from exc
    if not samples:
        raise DatasetError(f"no samples found in {root}")
    return samples


def split_by_domain(samples: list[SceneSample]) -> dict[Domain, list[SceneSample]]:
    out: dict[Domain, list[SceneSample]] = {Domain.SYNTHETIC: [], Domain.REAL: []}
    for s in samples:
        out[s.domain].append(s)
    return out


def generator_config_from_dict(values: dict[str, str], prefix: str = "") -> GeneratorConfig:
    """Build a GeneratorConfig from flat string key/values (see README for keys)."""
    from .config import coerce

    def get(key, kind, default):
        raw = values.get(prefix + key)
        return default if raw is None else coerce(prefix + key, raw, kind)

    base = GeneratorConfig()
    return GeneratorConfig(
        height=get("height", int, base.height),
        width=get("width", int, base.width),
        n_samples=get("n_samples", int, base.n_samples),
        clutter_count_range=(
            get("clutter_min", int, base.clutter_count_range[0]),
            get("clutter_max", int, base.clutter_count_range[1]),
        ),
        gamma_range=(
            get("gamma_min", float, base.gamma_range[0]),
            get("gamma_max", float, base.gamma_range[1]),
        ),
        noise_std=get("noise_std", float, base.noise_std),
        depth_range=(
            get("depth_min", float, base.depth_range[0]),
            get("depth_max", float, base.depth_range[1]),
        ),
        seed=get("seed", int, base.seed),
    )


__all__ = [
    "Domain",
    "SceneSample",
    "GeneratorConfig",
    "DatasetError",
    "generate_scene",
    "generate_dataset",
    "save_dataset",
    "load_dataset",
    "split_by_domain",
    "generator_config_from_dict",
]
