"""Staged training protocol: per-module pretraining, the soft-to-hard
attention switch, and alternating joint fine-tuning.

Stages run in a fixed order:

  A  depth predictor pretraining (syn_only / real_only / mix regimes)
  B  style translators, cycle-consistent with per-domain discriminators
  C  attention only, soft Gumbel masks, depth loss + KL sparsity
  D  inpainter (+ its discriminator), random-mask pretraining then the
     full reconstruction/perceptual/style/adversarial objective
  E  joint fine-tune of {inpainter, translator, depth} with hard masks,
     alternating the mixed-domain and real-only depth objectives; all
     adversarial terms are dropped

Each stage derives its RNG streams from (config.seed, stage), uses a fresh
Adam optimizer, and leaves every non-target network bitwise untouched, so a
run checkpointed after stage k and resumed reproduces the uninterrupted run
bit-exactly in single-threaded mode.
"""

from __future__ import annotations

import json
import zlib
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import torch

from . import depth as depth_mod
from .attention import GumbelConfig, Mask, attend, keep_rate, kl_sparsity_loss
from .backbone import (Architecture, CHECKPOINT_VERSION, build_network,
                       batch_depths, batch_images, batch_valids, init_params)
from .config import ConfigError
from .data import SceneSample
from .inpaint import (InpaintLossWeights, adversarial_loss_discriminator,
                      adversarial_loss_generator, compose, gate, inpaint_loss,
                      perceptual_loss, random_training_mask,
                      rgb_reconstruction_loss, style_loss)
from .translate import (TranslateLossWeights, TranslatorPair, identity_loss,
                        translator_loss)

STAGES = ("A", "B", "C", "D", "E")

NET_NAMES = ("depth", "attention", "inpainter", "g_r2s", "g_s2r",
             "disc_r", "disc_s", "disc_inpaint", "features")


@dataclass(frozen=True)
class TrainConfig:
    epochs_depth: int = 50
    epochs_translator: int = 50
    epochs_attention: int = 50
    epochs_inpainter: int = 50
    epochs_inpainter_pretrain: int = 10
    epochs_finetune: int = 50
    lr: float = 5e-5
    lr_disc: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    batch_size: int = 4  # per domain
    rho: float = 0.85
    tau: float = 1.0
    kl_weight: float = 1.0
    depth_max: float = 10.0
    base_width: int = 16
    finetune_ratio: int = 1  # real-only steps per mixed step
    seed: int = 0
    single_thread: bool = True

    def __post_init__(self):
        epochs = (self.epochs_depth, self.epochs_translator, self.epochs_attention,
                  self.epochs_inpainter, self.epochs_finetune)
        if min(epochs) < 1 or self.epochs_inpainter_pretrain < 0:
            raise ConfigError("stage epochs must be >= 1")
        if self.lr <= 0 or self.lr_disc <= 0:
            raise ConfigError("learning rates must be > 0")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ConfigError("moment decays must lie in [0, 1)")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if not 0 < self.rho < 1:
            raise ConfigError("rho must lie in (0, 1)")
        if self.tau <= 0 or self.kl_weight < 0:
            raise ConfigError("tau must be > 0 and kl_weight >= 0")
        if self.depth_max <= 0 or self.base_width < 1:
            raise ConfigError("depth_max and base_width must be positive")
        if self.finetune_ratio < 1:
            raise ConfigError("finetune_ratio must be >= 1")

    def gumbel(self) -> GumbelConfig:
        return GumbelConfig(tau=self.tau, rho=self.rho, kl_weight=self.kl_weight)


class CountingList:
    """Sequence wrapper counting item reads; used to audit regime contracts."""

    def __init__(self, items):
        self._items = list(items)
        self.reads = 0

    def __len__(self):
        return len(self._items)

    def __getitem__(self, index):
        self.reads += 1
        return self._items[index]

    def __iter__(self):
        for i in range(len(self._items)):
            yield self[i]


@dataclass
class DataBundle:
    real: "CountingList | list[SceneSample]"
    syn: "CountingList | list[SceneSample]"


class MetricsLog:
    """Per-step metrics, kept in memory and optionally appended as JSONL."""

    def __init__(self, path: str | Path | None = None):
        self.path = Path(path) if path else None
        self.records: list[dict] = []
        if self.path:
            self.path.parent.mkdir(parents=True, exist_ok=True)

    def append(self, **record):
        self.records.append(record)
        if self.path:
            with open(self.path, "a") as f:
                f.write(json.dumps(record) + "\n")

    def stage_values(self, stage: str, key: str) -> list[float]:
        return [r[key] for r in self.records if r.get("stage") == stage and key in r]


def derive_seed(base: int, tag: str) -> int:
    return (base * 2654435761 + zlib.crc32(tag.encode())) & 0x7FFFFFFFFFFF


@dataclass
class CheckpointBundle:
    nets: dict
    stage: str
    step: int
    config: TrainConfig

    def pipeline(self, use_attention=True, use_translator=True, use_inpainter=True):
        from .pipeline import ArcPipeline

        return ArcPipeline(
            depth_net=self.nets["depth"],
            attention_net=self.nets["attention"] if use_attention else None,
            translator=self.nets["g_r2s"] if use_translator else None,
            inpainter=self.nets["inpainter"] if use_inpainter else None,
        )

    def pipeline_auto(self):
        """Pipeline with exactly the modules this checkpoint has trained."""
        idx = (("init",) + STAGES).index(self.stage)
        return self.pipeline(
            use_translator=idx >= 2,  # stage B onward
            use_attention=idx >= 3,  # stage C onward
            use_inpainter=idx >= 4,  # stage D onward
        )

    def translator_pair(self) -> TranslatorPair:
        return TranslatorPair(g_r2s=self.nets["g_r2s"], g_s2r=self.nets["g_s2r"],
                              disc_r=self.nets["disc_r"], disc_s=self.nets["disc_s"])

    def save(self, path: str | Path) -> None:
        payload = {
            "version": CHECKPOINT_VERSION,
            "stage": self.stage,
            "step": self.step,
            "config": asdict(self.config),
            "nets": {name: {"arch": asdict(net.arch), "state": net.state_dict()}
                     for name, net in self.nets.items()},
        }
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        torch.save(payload, path)

    @classmethod
    def load(cls, path: str | Path) -> "CheckpointBundle":
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError(f"checkpoint not found: {path}")
        try:
            payload = torch.load(path, weights_only=True)
            version = payload["version"]
            nets = {}
            for name, entry in payload["nets"].items():
                net = build_network(Architecture(**entry["arch"]))
                net.load_state_dict(entry["state"])
                nets[name] = net
            bundle = cls(nets=nets, stage=payload["stage"], step=payload["step"],
                         config=TrainConfig(**payload["config"]))
        except (KeyError, RuntimeError, TypeError, ValueError) as exc:
            raise RuntimeError(f"corrupt checkpoint {path}: {exc}") from exc
        if version != CHECKPOINT_VERSION:
            raise RuntimeError(f"unsupported checkpoint version {version}")
        for net in bundle.nets.values():
            if net.arch.kind == "features":
                for p in net.parameters():
                    p.requires_grad_(False)
        return bundle


def make_initial_bundle(config: TrainConfig) -> CheckpointBundle:
    b = config.base_width
    archs = {
        "depth": Architecture(kind="depth", out_channels=1, base_width=b,
                              depth_max=config.depth_max),
        "attention": Architecture(kind="generator", out_channels=1, head="linear",
                                  base_width=b),
        "inpainter": Architecture(kind="generator", out_channels=3, base_width=b),
        "g_r2s": Architecture(kind="generator", out_channels=3, base_width=b),
        "g_s2r": Architecture(kind="generator", out_channels=3, base_width=b),
        "disc_r": Architecture(kind="discriminator", base_width=b),
        "disc_s": Architecture(kind="discriminator", base_width=b),
        "disc_inpaint": Architecture(kind="discriminator", base_width=b),
        "features": Architecture(kind="features", base_width=b),
    }
    nets = {name: init_params(arch, derive_seed(config.seed, f"init/{name}"))
            for name, arch in archs.items()}
    return CheckpointBundle(nets=nets, stage="init", step=0, config=config)


def _apply_thread_mode(config: TrainConfig) -> None:
    if config.single_thread:
        torch.set_num_threads(1)


def _adam(params, lr, config):
    return torch.optim.Adam(params, lr=lr, betas=(config.beta1, config.beta2))


def _step_checked(opt, nets: list, stage: str, step: int) -> None:
    """Apply an optimizer step, then assert the updated nets stayed finite."""
    opt.step()
    for net in nets:
        for pname, p in net.named_parameters():
            if not torch.isfinite(p).all():
                raise FloatingPointError(
                    f"non-finite parameter {pname} after stage {stage} step {step}")


class _Cycler:
    """Yields batches of indices, reshuffling whenever a pass completes."""

    def __init__(self, n: int, batch_size: int, seed: int):
        if n == 0:
            raise ValueError("empty dataset")
        self.n = n
        self.batch_size = min(batch_size, n)
        self.gen = torch.Generator().manual_seed(seed)
        self._order: list[int] = []

    def next_batch(self) -> list[int]:
        while len(self._order) < self.batch_size:
            self._order.extend(torch.randperm(self.n, generator=self.gen).tolist())
        picked, self._order = self._order[: self.batch_size], self._order[self.batch_size:]
        return picked

    def steps_per_epoch(self) -> int:
        return max(1, (self.n + self.batch_size - 1) // self.batch_size)


def _take(dataset, indices) -> list[SceneSample]:
    return [dataset[i] for i in indices]


def _freeze(nets: dict, names: tuple[str, ...]):
    states = {}
    for name in names:
        states[name] = [p.requires_grad for p in nets[name].parameters()]
        for p in nets[name].parameters():
            p.requires_grad_(False)
    return states


def _unfreeze(nets: dict, states: dict):
    for name, flags in states.items():
        for p, flag in zip(nets[name].parameters(), flags):
            p.requires_grad_(flag)


def stage_pretrain_depth(config: TrainConfig, data: DataBundle, regime: str = "mix",
                         bundle: CheckpointBundle | None = None,
                         log: MetricsLog | None = None,
                         epochs: int | None = None) -> CheckpointBundle:
    """Stage A: supervised depth pretraining on raw images."""
    if regime not in ("syn_only", "real_only", "mix"):
        raise ValueError(f"unknown regime {regime!r}")
    if regime in ("syn_only", "mix") and len(data.syn) == 0:
        raise ValueError("empty synthetic dataset")
    if regime in ("real_only", "mix") and len(data.real) == 0:
        raise ValueError("empty real dataset")
    _apply_thread_mode(config)
    bundle = bundle or make_initial_bundle(config)
    log = log or MetricsLog()
    epochs = config.epochs_depth if epochs is None else epochs
    net = bundle.nets["depth"]
    opt = _adam(net.parameters(), config.lr, config)

    driver = data.syn if regime != "real_only" else data.real
    drv = _Cycler(len(driver), config.batch_size, derive_seed(config.seed, "A/driver"))
    follower = None
    if regime == "mix":
        follower = _Cycler(len(data.real), config.batch_size,
                           derive_seed(config.seed, "A/follower"))

    step = bundle.step
    for _ in range(epochs):
        for _ in range(drv.steps_per_epoch()):
            opt.zero_grad()
            dsamples = _take(driver, drv.next_batch())
            pred = net(batch_images(dsamples))[:, 0]
            loss_drv = depth_mod.depth_l1_loss(pred, batch_depths(dsamples),
                                               batch_valids(dsamples))
            if regime == "mix":
                rsamples = _take(data.real, follower.next_batch())
                pred_r = net(batch_images(rsamples))[:, 0]
                loss_real = depth_mod.depth_l1_loss(pred_r, batch_depths(rsamples),
                                                    batch_valids(rsamples))
                loss = 0.5 * (loss_real + loss_drv)
            else:
                loss = loss_drv
            loss.backward()
            step += 1
            _step_checked(opt, [net], "A", step)
            log.append(stage="A", step=step, regime=regime, loss=loss.item())
    return replace(bundle, stage="A", step=step)


def stage_train_translator(config: TrainConfig, data: DataBundle,
                           bundle: CheckpointBundle,
                           log: MetricsLog | None = None,
                           epochs: int | None = None) -> CheckpointBundle:
    """Stage B: cycle-consistent translator training with per-domain critics."""
    if len(data.real) == 0 or len(data.syn) == 0:
        raise ValueError("translator stage needs both domains")
    _apply_thread_mode(config)
    log = log or MetricsLog()
    epochs = config.epochs_translator if epochs is None else epochs
    pair = bundle.translator_pair()
    weights = TranslateLossWeights()
    opt_g = _adam(list(pair.g_r2s.parameters()) + list(pair.g_s2r.parameters()),
                  config.lr, config)
    opt_dr = _adam(pair.disc_r.parameters(), config.lr_disc, config)
    opt_ds = _adam(pair.disc_s.parameters(), config.lr_disc, config)

    syn_cy = _Cycler(len(data.syn), config.batch_size, derive_seed(config.seed, "B/syn"))
    real_cy = _Cycler(len(data.real), config.batch_size, derive_seed(config.seed, "B/real"))

    step = bundle.step
    for _ in range(epochs):
        for _ in range(syn_cy.steps_per_epoch()):
            x_s = batch_images(_take(data.syn, syn_cy.next_batch()))
            x_r = batch_images(_take(data.real, real_cy.next_batch()))

            opt_g.zero_grad()
            fake_syn = pair.g_r2s(x_r)
            fake_real = pair.g_s2r(x_s)
            cyc = ((pair.g_s2r(fake_syn) - x_r).abs().mean()
                   + (pair.g_r2s(fake_real) - x_s).abs().mean())
            ident = identity_loss(pair, x_r, x_s)
            adv_r = adversarial_loss_generator(pair.disc_r, fake_real)
            adv_s = adversarial_loss_generator(pair.disc_s, fake_syn)
            loss_g = translator_loss(cyc, ident, adv_r, adv_s, weights)
            loss_g.backward()
            step += 1
            _step_checked(opt_g, [pair.g_r2s, pair.g_s2r], "B", step)

            opt_dr.zero_grad()
            loss_dr = adversarial_loss_discriminator(pair.disc_r, fake_real.detach(), x_r)
            loss_dr.backward()
            _step_checked(opt_dr, [pair.disc_r], "B", step)

            opt_ds.zero_grad()
            loss_ds = adversarial_loss_discriminator(pair.disc_s, fake_syn.detach(), x_s)
            loss_ds.backward()
            _step_checked(opt_ds, [pair.disc_s], "B", step)

            log.append(stage="B", step=step, loss=loss_g.item(), cycle=cyc.item(),
                       identity=ident.item(), disc_r=loss_dr.item(),
                       disc_s=loss_ds.item())
    return replace(bundle, stage="B", step=step)


def stage_train_attention(config: TrainConfig, data: DataBundle,
                          bundle: CheckpointBundle,
                          log: MetricsLog | None = None,
                          epochs: int | None = None) -> CheckpointBundle:
    """Stage C: train attention only; depth and translator stay frozen.

    Soft Gumbel masks gate the translated real images before the frozen
    depth net; the loss is the real-branch depth L1 plus the KL sparsity
    term steering the keep-rate toward rho.
    """
    if bundle.stage not in ("B", "C"):
        raise RuntimeError(f"attention stage expects a stage-B checkpoint, "
                           f"got {bundle.stage!r}")
    if len(data.real) == 0:
        raise ValueError("attention stage needs real data")
    _apply_thread_mode(config)
    log = log or MetricsLog()
    epochs = config.epochs_attention if epochs is None else epochs
    gcfg = config.gumbel()
    net = bundle.nets["attention"]
    frozen = _freeze(bundle.nets, ("depth", "g_r2s"))
    opt = _adam(net.parameters(), config.lr, config)
    cy = _Cycler(len(data.real), config.batch_size, derive_seed(config.seed, "C/real"))

    step = bundle.step
    for _ in range(epochs):
        for _ in range(cy.steps_per_epoch()):
            opt.zero_grad()
            samples = _take(data.real, cy.next_batch())
            x_r = batch_images(samples)
            with torch.no_grad():
                x_t = bundle.nets["g_r2s"](x_r)
            mask = attend(net, x_r, gcfg, train_mode=True,
                          noise_seed=derive_seed(config.seed, f"C/noise/{step}"))
            pred = bundle.nets["depth"](gate(mask, x_t))[:, 0]
            depth_term = depth_mod.depth_l1_loss(pred, batch_depths(samples),
                                                 batch_valids(samples))
            xi = keep_rate(mask)
            loss = depth_term + gcfg.kl_weight * kl_sparsity_loss(xi, gcfg.rho)
            loss.backward()
            step += 1
            _step_checked(opt, [net], "C", step)
            log.append(stage="C", step=step, loss=loss.item(),
                       depth=depth_term.item(), keep_rate=xi.item())
    _unfreeze(bundle.nets, frozen)
    return replace(bundle, stage="C", step=step)


def stage_train_inpainter(config: TrainConfig, data: DataBundle,
                          bundle: CheckpointBundle,
                          log: MetricsLog | None = None,
                          epochs: int | None = None,
                          pretrain_epochs: int | None = None) -> CheckpointBundle:
    """Stage D: inpainter and its discriminator; attention is frozen and hard.

    Random-rectangle self-supervised reconstruction first, then the combined
    reconstruction/perceptual/style/adversarial objective where the critic's
    positive class is synthetic imagery.
    """
    if bundle.stage not in ("C", "D"):
        raise RuntimeError(f"inpainter stage expects a stage-C checkpoint, "
                           f"got {bundle.stage!r}")
    if len(data.real) == 0 or len(data.syn) == 0:
        raise ValueError("inpainter stage needs both domains")
    _apply_thread_mode(config)
    log = log or MetricsLog()
    epochs = config.epochs_inpainter if epochs is None else epochs
    pretrain_epochs = (config.epochs_inpainter_pretrain if pretrain_epochs is None
                       else pretrain_epochs)
    gcfg = config.gumbel()
    net = bundle.nets["inpainter"]
    disc = bundle.nets["disc_inpaint"]
    extractor = bundle.nets["features"]
    weights = InpaintLossWeights()
    frozen = _freeze(bundle.nets, ("depth", "g_r2s", "attention"))
    opt = _adam(net.parameters(), config.lr, config)
    opt_d = _adam(disc.parameters(), config.lr_disc, config)
    real_cy = _Cycler(len(data.real), config.batch_size, derive_seed(config.seed, "D/real"))
    syn_cy = _Cycler(len(data.syn), config.batch_size, derive_seed(config.seed, "D/syn"))

    step = bundle.step

    def translated(samples):
        with torch.no_grad():
            return bundle.nets["g_r2s"](batch_images(samples))

    for _ in range(pretrain_epochs):
        for _ in range(real_cy.steps_per_epoch()):
            opt.zero_grad()
            x_t = translated(_take(data.real, real_cy.next_batch()))
            x_s = batch_images(_take(data.syn, syn_cy.next_batch()))
            h, w = x_t.shape[-2:]
            masks = [random_training_mask(h, w, gcfg.rho,
                                          derive_seed(config.seed, f"D/mask/{step}/{i}"))
                     for i in range(x_t.shape[0] + x_s.shape[0])]
            mt = Mask(values=torch.stack([m.values for m in masks[: x_t.shape[0]]])
                      .unsqueeze(1), mode="hard")
            ms = Mask(values=torch.stack([m.values for m in masks[x_t.shape[0]:]])
                      .unsqueeze(1), mode="hard")
            rec = 0.5 * (rgb_reconstruction_loss(net(gate(mt, x_t)), x_t)
                         + rgb_reconstruction_loss(net(gate(ms, x_s)), x_s))
            rec.backward()
            step += 1
            _step_checked(opt, [net], "D", step)
            log.append(stage="D", step=step, phase="pretrain", rec=rec.item())

    for _ in range(epochs):
        for _ in range(real_cy.steps_per_epoch()):
            samples = _take(data.real, real_cy.next_batch())
            x_r = batch_images(samples)
            x_s = batch_images(_take(data.syn, syn_cy.next_batch()))
            x_t = translated(samples)
            mask = attend(bundle.nets["attention"], x_r, gcfg, train_mode=False)

            opt.zero_grad()
            out = net(gate(mask, x_t))
            composed = compose(mask, x_t, out)
            rec = rgb_reconstruction_loss(out, x_t)
            per = perceptual_loss(extractor, out, x_t)
            sty = style_loss(extractor, out, x_t)
            adv = adversarial_loss_generator(disc, composed)
            loss = inpaint_loss(rec, per, sty, adv, weights)
            loss.backward()
            step += 1
            _step_checked(opt, [net], "D", step)

            opt_d.zero_grad()
            loss_d = adversarial_loss_discriminator(disc, composed.detach(), x_s)
            loss_d.backward()
            _step_checked(opt_d, [disc], "D", step)

            log.append(stage="D", step=step, phase="main", loss=loss.item(),
                       rec=rec.item(), perceptual=per.item(), style=sty.item(),
                       adv=adv.item(), disc=loss_d.item())
    _unfreeze(bundle.nets, frozen)
    return replace(bundle, stage="D", step=step)


def stage_finetune(config: TrainConfig, data: DataBundle,
                   bundle: CheckpointBundle,
                   log: MetricsLog | None = None,
                   epochs: int | None = None) -> CheckpointBundle:
    """Stage E: joint fine-tune of {inpainter, translator, depth}.

    Attention stays frozen and hard; no discriminator is evaluated. Steps
    alternate between the mixed objective (translated-real branch plus the
    synthetic branch) and the real-only objective.
    """
    if bundle.stage not in ("D", "E"):
        raise RuntimeError(f"fine-tune expects a stage-D checkpoint, "
                           f"got {bundle.stage!r}")
    if len(data.real) == 0 or len(data.syn) == 0:
        raise ValueError("fine-tune needs both domains")
    _apply_thread_mode(config)
    log = log or MetricsLog()
    epochs = config.epochs_finetune if epochs is None else epochs
    gcfg = config.gumbel()
    frozen = _freeze(bundle.nets, ("attention",))
    params = (list(bundle.nets["inpainter"].parameters())
              + list(bundle.nets["g_r2s"].parameters())
              + list(bundle.nets["depth"].parameters()))
    opt = _adam(params, config.lr, config)
    real_cy = _Cycler(len(data.real), config.batch_size, derive_seed(config.seed, "E/real"))
    syn_cy = _Cycler(len(data.syn), config.batch_size, derive_seed(config.seed, "E/syn"))

    step = bundle.step
    local = 0
    period = 1 + config.finetune_ratio
    for _ in range(epochs):
        for _ in range(real_cy.steps_per_epoch()):
            samples = _take(data.real, real_cy.next_batch())
            x_r = batch_images(samples)
            with torch.no_grad():
                mask = attend(bundle.nets["attention"], x_r, gcfg, train_mode=False)

            opt.zero_grad()
            x_t = bundle.nets["g_r2s"](x_r)
            composed = compose(mask, x_t, bundle.nets["inpainter"](gate(mask, x_t)))
            pred = bundle.nets["depth"](composed)[:, 0]
            loss_real = depth_mod.depth_l1_loss(pred, batch_depths(samples),
                                                batch_valids(samples))
            mixed_step = local % period == 0
            if mixed_step:
                syn_samples = _take(data.syn, syn_cy.next_batch())
                pred_s = bundle.nets["depth"](batch_images(syn_samples))[:, 0]
                loss_syn = depth_mod.depth_l1_loss(pred_s, batch_depths(syn_samples),
                                                   batch_valids(syn_samples))
                loss = 0.5 * (loss_real + loss_syn)
            else:
                loss = loss_real
            loss.backward()
            local += 1
            step += 1
            _step_checked(opt, [bundle.nets["inpainter"], bundle.nets["g_r2s"],
                                bundle.nets["depth"]], "E", step)
            log.append(stage="E", step=step, loss=loss.item(),
                       objective="mixed" if mixed_step else "real_only")
    _unfreeze(bundle.nets, frozen)
    return replace(bundle, stage="E", step=step)


def checkpoint_path(out_dir: str | Path, stage: str) -> Path:
    return Path(out_dir) / f"checkpoint_{stage}.pt"


def run_protocol(config: TrainConfig, data: DataBundle,
                 out_dir: str | Path | None = None,
                 log: MetricsLog | None = None,
                 resume: bool = True,
                 stop_after: str | None = None) -> CheckpointBundle:
    """Run stages A..E in order, checkpointing after each.

    With ``resume`` and an ``out_dir`` holding earlier stage checkpoints,
    training continues after the latest completed stage; because every stage
    is self-seeded this reproduces an uninterrupted run bit-exactly.
    """
    log = log or MetricsLog(Path(out_dir) / "metrics.jsonl" if out_dir else None)
    bundle = None
    todo = list(STAGES)
    if out_dir and resume:
        for stage in reversed(STAGES):
            path = checkpoint_path(out_dir, stage)
            if path.exists():
                bundle = CheckpointBundle.load(path)
                todo = list(STAGES[STAGES.index(stage) + 1:])
                break

    runners = {
        "A": lambda b: stage_pretrain_depth(config, data, "mix", b, log),
        "B": lambda b: stage_train_translator(config, data, b, log),
        "C": lambda b: stage_train_attention(config, data, b, log),
        "D": lambda b: stage_train_inpainter(config, data, b, log),
        "E": lambda b: stage_finetune(config, data, b, log),
    }
    for stage in todo:
        bundle = runners[stage](bundle)
        if out_dir:
            bundle.save(checkpoint_path(out_dir, stage))
        if stop_after == stage:
            break
    if bundle is None:
        raise RuntimeError("nothing to run: protocol already complete")
    return bundle


def train_config_from_dict(values: dict[str, str], prefix: str = "") -> TrainConfig:
    """Build a TrainConfig from flat string key/values (see README for keys)."""
    from .config import coerce

    base = TrainConfig()
    kwargs = {}
    for f, kind in (("epochs_depth", int), ("epochs_translator", int),
                    ("epochs_attention", int), ("epochs_inpainter", int),
                    ("epochs_inpainter_pretrain", int), ("epochs_finetune", int),
                    ("lr", float), ("lr_disc", float), ("beta1", float),
                    ("beta2", float), ("batch_size", int), ("rho", float),
                    ("tau", float), ("kl_weight", float), ("depth_max", float),
                    ("base_width", int), ("finetune_ratio", int), ("seed", int),
                    ("single_thread", bool)):
        raw = values.get(prefix + f)
        kwargs[f] = getattr(base, f) if raw is None else coerce(prefix + f, raw, kind)
    return TrainConfig(**kwargs)
