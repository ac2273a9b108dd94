"""Command-line entry point: dataset generation, staged training, evaluation,
keep-rate ablation, qualitative panels, and pairwise model comparison.

Every run takes a flat key=value config file plus ``--set`` overrides,
rejects unknown keys, writes a resolved-config snapshot into the output
directory, and guards that directory with a lock file.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import data as data_mod
from . import evaluation
from . import trainer as trainer_mod
from .attention import save_mask_png
from .backbone import image_to_tensor
from .config import ConfigError, coerce, dump_config, load_config_file
from .data import Domain, GeneratorConfig
from .depth import colorize_depth
from .trainer import (CheckpointBundle, DataBundle, MetricsLog, TrainConfig,
                      checkpoint_path, derive_seed, run_protocol)

GENERATOR_KEYS = {
    "height": int, "width": int, "seed": int,
    "n_real": int, "n_syn": int, "n_test": int,
    "clutter_min": int, "clutter_max": int,
    "gamma_min": float, "gamma_max": float, "noise_std": float,
    "depth_min": float, "depth_max": float,
}

TRAIN_KEYS = {
    "epochs_depth": int, "epochs_translator": int, "epochs_attention": int,
    "epochs_inpainter": int, "epochs_inpainter_pretrain": int,
    "epochs_finetune": int,
    "lr": float, "lr_disc": float, "beta1": float, "beta2": float,
    "batch_size": int, "rho": float, "tau": float, "kl_weight": float,
    "base_width": int, "finetune_ratio": int, "single_thread": bool,
}

KNOWN_KEYS = {**GENERATOR_KEYS, **TRAIN_KEYS}

DATA_DEFAULTS = {"n_real": 50, "n_syn": 500, "n_test": 100}


class CliError(RuntimeError):
    pass


def resolve_config(args) -> dict[str, str]:
    """Merge config file, --set overrides and flag shortcuts into one dict."""
    values: dict[str, str] = {}
    if args.config:
        values.update(load_config_file(args.config))
    for item in args.set or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, val = item.split("=", 1)
        values[key.strip()] = val.strip()
    if getattr(args, "seed", None) is not None:
        values["seed"] = str(args.seed)
    if getattr(args, "rho", None) is not None:
        values["rho"] = str(args.rho)
    unknown = set(values) - set(KNOWN_KEYS)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    return values


def materialize(values: dict[str, str]):
    """Resolve the flat dict into generator/train configs and dataset sizes."""
    gen = GeneratorConfig(
        height=_get(values, "height", int, 64),
        width=_get(values, "width", int, 64),
        n_samples=1,  # per-split sizes applied below
        clutter_count_range=(_get(values, "clutter_min", int, 1),
                             _get(values, "clutter_max", int, 4)),
        gamma_range=(_get(values, "gamma_min", float, 0.7),
                     _get(values, "gamma_max", float, 1.3)),
        noise_std=_get(values, "noise_std", float, 0.02),
        depth_range=(_get(values, "depth_min", float, 1.0),
                     _get(values, "depth_max", float, 10.0)),
        seed=_get(values, "seed", int, 0),
    )
    train = trainer_mod.train_config_from_dict(values)
    train = replace(train, seed=gen.seed, depth_max=gen.depth_range[1])
    sizes = {k: _get(values, k, int, DATA_DEFAULTS[k]) for k in DATA_DEFAULTS}
    return gen, train, sizes


def _get(values, key, kind, default):
    raw = values.get(key)
    return default if raw is None else coerce(key, raw, kind)


def snapshot_config(out_dir: Path, gen: GeneratorConfig, train: TrainConfig,
                    sizes: dict) -> None:
    resolved = {
        "height": gen.height, "width": gen.width, "seed": gen.seed,
        "clutter_min": gen.clutter_count_range[0],
        "clutter_max": gen.clutter_count_range[1],
        "gamma_min": gen.gamma_range[0], "gamma_max": gen.gamma_range[1],
        "noise_std": gen.noise_std,
        "depth_min": gen.depth_range[0], "depth_max": gen.depth_range[1],
        **sizes,
        "epochs_depth": train.epochs_depth,
        "epochs_translator": train.epochs_translator,
        "epochs_attention": train.epochs_attention,
        "epochs_inpainter": train.epochs_inpainter,
        "epochs_inpainter_pretrain": train.epochs_inpainter_pretrain,
        "epochs_finetune": train.epochs_finetune,
        "lr": train.lr, "lr_disc": train.lr_disc,
        "beta1": train.beta1, "beta2": train.beta2,
        "batch_size": train.batch_size, "rho": train.rho, "tau": train.tau,
        "kl_weight": train.kl_weight, "base_width": train.base_width,
        "finetune_ratio": train.finetune_ratio,
        "single_thread": train.single_thread,
    }
    (out_dir / "config_resolved.cfg").write_text(dump_config(resolved))


class OutputLock:
    """Exclusive lock file guarding an output directory."""

    def __init__(self, out_dir: Path):
        self.path = out_dir / ".lock"

    def __enter__(self):
        self.path.parent.mkdir(parents=True, exist_ok=True)
        try:
            fd = os.open(self.path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise CliError(
                f"output directory is locked by another run: {self.path} "
                f"(remove the lock file if that run is dead)")
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        return self

    def __exit__(self, *exc):
        self.path.unlink(missing_ok=True)
        return False


def generate_benchmark(gen: GeneratorConfig, sizes: dict):
    """Train and test splits; the test split uses an independent seed."""
    train_real = data_mod.generate_dataset(
        replace(gen, n_samples=sizes["n_real"]), Domain.REAL)
    train_syn = data_mod.generate_dataset(
        replace(gen, n_samples=sizes["n_syn"]), Domain.SYNTHETIC)
    test_seed = derive_seed(gen.seed, "test-split")
    test_real = data_mod.generate_dataset(
        replace(gen, n_samples=sizes["n_test"], seed=test_seed), Domain.REAL)
    return train_real, train_syn, test_real


def cmd_gen_data(args) -> int:
    values = resolve_config(args)
    gen, train, sizes = materialize(values)
    out = Path(args.out)
    with OutputLock(out):
        snapshot_config(out, gen, train, sizes)
        train_real, train_syn, test_real = generate_benchmark(gen, sizes)
        data_mod.save_dataset(train_real + train_syn, out / "train")
        data_mod.save_dataset(test_real, out / "test")
    print(f"wrote {len(train_real)} real + {len(train_syn)} synthetic training "
          f"samples and {len(test_real)} real test samples under {out}")
    return 0


def _load_split(root: Path, split: str):
    return data_mod.load_dataset(Path(root) / split)


def _train_bundle_from_dir(data_dir: Path) -> DataBundle:
    by_domain = data_mod.split_by_domain(_load_split(data_dir, "train"))
    return DataBundle(real=by_domain[Domain.REAL], syn=by_domain[Domain.SYNTHETIC])


def cmd_train(args) -> int:
    values = resolve_config(args)
    gen, train, sizes = materialize(values)
    out = Path(args.out)
    data_dir = Path(args.data) if args.data else None
    with OutputLock(out):
        snapshot_config(out, gen, train, sizes)
        if data_dir:
            bundle_data = _train_bundle_from_dir(data_dir)
        else:
            train_real, train_syn, _ = generate_benchmark(gen, sizes)
            bundle_data = DataBundle(real=train_real, syn=train_syn)
        stop_after = None if args.stage == "all" else args.stage
        log = MetricsLog(out / "metrics.jsonl")
        bundle = run_protocol(train, bundle_data, out_dir=out, log=log,
                              stop_after=stop_after)
    print(f"finished stage {bundle.stage} at step {bundle.step}; "
          f"checkpoints under {out}")
    return 0


def _load_latest_bundle(run_dir: Path) -> CheckpointBundle:
    for stage in reversed(trainer_mod.STAGES):
        path = checkpoint_path(run_dir, stage)
        if path.exists():
            return CheckpointBundle.load(path)
    raise CliError(f"no checkpoints found under {run_dir}")


def _test_samples(args, gen, sizes):
    if args.data:
        return _load_split(Path(args.data), "test")
    _, _, test_real = generate_benchmark(gen, sizes)
    return test_real


def cmd_eval(args) -> int:
    values = resolve_config(args)
    gen, train, sizes = materialize(values)
    run_dir = Path(args.run)
    out = Path(args.out)
    with OutputLock(out):
        snapshot_config(out, gen, train, sizes)
        bundle = _load_latest_bundle(run_dir)
        test = _test_samples(args, gen, sizes)
        cap = bundle.config.depth_max
        reports, labels = [], []
        reports.append(evaluation.evaluate_pipeline(bundle.pipeline_auto(), test, cap))
        labels.append(f"arc_full_stage_{bundle.stage}")
        stage_a = checkpoint_path(run_dir, "A")
        if stage_a.exists():
            baseline = CheckpointBundle.load(stage_a).pipeline(
                use_attention=False, use_translator=False, use_inpainter=False)
            reports.append(evaluation.evaluate_pipeline(baseline, test, cap))
            labels.append("mix_baseline")
        tsv = evaluation.report_tsv(reports, labels)
        (out / "metrics.tsv").write_text(tsv)
    print(tsv, end="")
    return 0


def cmd_ablate_rho(args) -> int:
    # here --rho is the sweep list, not the single-target override
    rho_arg, args.rho = args.rho, None
    values = resolve_config(args)
    gen, train, sizes = materialize(values)
    out = Path(args.out)
    rho_values = (tuple(float(r) for r in rho_arg.split(","))
                  if rho_arg else evaluation.DEFAULT_RHO_SWEEP)
    with OutputLock(out):
        snapshot_config(out, gen, train, sizes)
        train_real, train_syn, test_real = generate_benchmark(gen, sizes)
        bundle_data = DataBundle(real=train_real, syn=train_syn)
        base = None
        if args.run:
            base = CheckpointBundle.load(checkpoint_path(Path(args.run), "B"))
        log = MetricsLog(out / "metrics.jsonl")
        rows = evaluation.rho_sweep(train, bundle_data, test_real,
                                    rho_values=rho_values, base_bundle=base,
                                    log=log)
        with open(out / "rho_sweep.csv", "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["rho", "keep_rate"] + list(evaluation.METRIC_FIELDS))
            for row in rows:
                writer.writerow([row.rho, row.keep_rate]
                                + [getattr(row.report, m)
                                   for m in evaluation.METRIC_FIELDS])
        _plot_rho_sweep(rows, out / "rho_sweep.png")
    for row in rows:
        print(f"rho={row.rho:.5f} keep_rate={row.keep_rate:.4f} "
              f"rel={row.report.rel:.4f} delta1={row.report.delta1:.4f}")
    return 0


def _plot_rho_sweep(rows, path):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.5))
    rhos = [r.rho for r in rows]
    ax1.plot(rhos, [r.report.rel for r in rows], "o-")
    ax1.set_xlabel("keep-rate target")
    ax1.set_ylabel("abs. relative error")
    ax2.plot(rhos, [r.report.delta1 for r in rows], "o-")
    ax2.set_xlabel("keep-rate target")
    ax2.set_ylabel("delta < 1.25 accuracy")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def cmd_visualize(args) -> int:
    values = resolve_config(args)
    gen, train, sizes = materialize(values)
    run_dir = Path(args.run)
    out = Path(args.out)
    with OutputLock(out):
        snapshot_config(out, gen, train, sizes)
        bundle = _load_latest_bundle(run_dir)
        test = _test_samples(args, gen, sizes)
        n = min(args.n, len(test))
        cap = bundle.config.depth_max
        pipeline = bundle.pipeline()
        for i in range(n):
            _write_panel(pipeline, test[i], cap, out / f"panel_{i:03d}.png")
    print(f"wrote {n} panels under {out}")
    return 0


def _to_u8(image_chw) -> np.ndarray:
    arr = np.asarray(image_chw.detach().cpu()).transpose(1, 2, 0)
    return np.clip(np.round((arr + 1.0) * 127.5), 0, 255).astype(np.uint8)


def _write_panel(pipeline, sample, cap, path) -> None:
    """One row of {input, mask, translated, completed, predicted, ground truth}."""
    from PIL import Image

    outputs = pipeline.run(image_to_tensor(sample.image))
    mask01 = np.asarray(outputs.mask.values[0, 0].cpu())
    tiles = [
        np.clip(np.round((sample.image + 1.0) * 127.5), 0, 255).astype(np.uint8),
        np.repeat(np.where(mask01 >= 0.5, 255, 0).astype(np.uint8)[..., None], 3, axis=2),
        _to_u8(outputs.translated[0]),
        _to_u8(outputs.completed[0]),
        colorize_depth(np.asarray(outputs.depth[0, 0].cpu()), cap),
        colorize_depth(sample.depth, cap),
    ]
    gap = 2
    h, w = sample.depth.shape
    panel = np.full((h, len(tiles) * (w + gap) - gap, 3), 255, dtype=np.uint8)
    for i, tile in enumerate(tiles):
        panel[:, i * (w + gap) : i * (w + gap) + w] = tile
    Image.fromarray(panel).save(path)


def cmd_compare(args) -> int:
    values = resolve_config(args)
    gen, train, sizes = materialize(values)
    out = Path(args.out)
    with OutputLock(out):
        snapshot_config(out, gen, train, sizes)
        bundle_a = CheckpointBundle.load(Path(args.checkpoint_a))
        bundle_b = CheckpointBundle.load(Path(args.checkpoint_b))
        test = _test_samples(args, gen, sizes)
        cap = bundle_a.config.depth_max
        pipe_a = bundle_a.pipeline_auto()
        pipe_b = bundle_b.pipeline_auto()
        reduction = evaluation.per_sample_error_reduction(pipe_a, pipe_b, test,
                                                          cap, metric=args.metric)
        with open(out / "per_sample.csv", "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["rank", f"{args.metric}_delta"])
            for rank, delta in enumerate(reduction.deltas):
                writer.writerow([rank, delta])
        _plot_reduction(reduction, out / "per_sample.png")

        region_rows, region_labels = _region_tables(pipe_a, pipe_b, test, cap)
        (out / "region_metrics.tsv").write_text(
            evaluation.report_tsv(region_rows, region_labels))
        summary = (f"fraction_improved={reduction.fraction_improved:.4f} "
                   f"metric={reduction.metric} samples={len(reduction.deltas)}")
        (out / "summary.txt").write_text(summary + "\n")
    print(summary)
    return 0


def _region_tables(pipe_a, pipe_b, test, cap):
    """Pooled inside/outside-mask metrics; masks come from pipeline A."""
    from .attention import Mask
    import torch

    preds_a, preds_b, gts, valids, masks = [], [], [], [], []
    for s in test:
        preds_a.append(pipe_a.predict_depth(s))
        preds_b.append(pipe_b.predict_depth(s))
        gts.append(s.depth)
        valids.append(s.valid)
        masks.append(pipe_a.predict_mask(s))
    mask = Mask(values=torch.from_numpy(np.stack(masks)), mode="hard")
    inside_a, outside_a = evaluation.masked_region_metrics(
        np.stack(preds_a), np.stack(gts), np.stack(valids), mask, cap)
    inside_b, outside_b = evaluation.masked_region_metrics(
        np.stack(preds_b), np.stack(gts), np.stack(valids), mask, cap)
    return [r for r in (inside_a, inside_b) if r], \
           [r for r in (outside_a, outside_b) if r]


def _plot_reduction(reduction, path):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.plot(range(len(reduction.deltas)), reduction.deltas)
    ax.axhline(0.0, color="k", linewidth=0.8)
    crossing = int(reduction.fraction_improved * len(reduction.deltas))
    ax.axvline(crossing, color="b", linewidth=0.8)
    ax.set_xlabel("sample rank")
    ax.set_ylabel(f"{reduction.metric} difference")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="arcdepth",
        description="Attend-remove-complete depth adaptation toolkit.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out_default):
        p.add_argument("--config", default=None, help="flat key=value config file")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override a config key")
        p.add_argument("--out", default=out_default, help="output directory")
        p.add_argument("--seed", type=int, default=None)

    p = sub.add_parser("gen-data", help="generate the two-domain benchmark")
    common(p, "runs/data")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="run the staged training protocol")
    common(p, "runs/train")
    p.add_argument("--data", default=None, help="dataset root from gen-data")
    p.add_argument("--stage", default="all",
                   choices=list(trainer_mod.STAGES) + ["all"],
                   help="train through this stage (resumes from checkpoints)")
    p.add_argument("--rho", type=float, default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate checkpoints on the test split")
    common(p, "runs/eval")
    p.add_argument("--run", required=True, help="training output directory")
    p.add_argument("--data", default=None, help="dataset root from gen-data")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate-rho", help="sweep the keep-rate target")
    common(p, "runs/ablate")
    p.add_argument("--run", default=None,
                   help="reuse stage-B checkpoint from this training directory")
    p.add_argument("--rho", default=None,
                   help="comma-separated keep-rate targets")
    p.set_defaults(func=cmd_ablate_rho)

    p = sub.add_parser("visualize", help="export qualitative panels")
    common(p, "runs/panels")
    p.add_argument("--run", required=True)
    p.add_argument("--data", default=None)
    p.add_argument("--n", type=int, default=8, help="number of panels")
    p.set_defaults(func=cmd_visualize)

    p = sub.add_parser("compare", help="per-sample and region comparison")
    common(p, "runs/compare")
    p.add_argument("--checkpoint-a", required=True, help="full pipeline checkpoint")
    p.add_argument("--checkpoint-b", required=True, help="baseline checkpoint")
    p.add_argument("--data", default=None)
    p.add_argument("--metric", default="rms_log",
                   choices=list(evaluation.METRIC_FIELDS))
    p.set_defaults(func=cmd_compare)

    return parser


def main(argv=None) -> int:
    threads = os.environ.get("ARC_THREADS")
    if threads:
        import torch

        torch.set_num_threads(max(1, int(threads)))
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, CliError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
