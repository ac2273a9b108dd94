"""Depth metric suite and the three analysis studies: masked-region
breakdown, per-sample error reduction, and the keep-rate target sweep.

All metrics are computed in float64 over valid pixels only, after clamping
predictions and ground truth to (DEPTH_FLOOR, cap].
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, replace

import numpy as np

DEPTH_FLOOR = 1e-3  # meters; clamp floor before ratios and logs

METRIC_FIELDS = ("rel", "sq_rel", "rms", "rms_log", "delta1", "delta2", "delta3")

DEFAULT_RHO_SWEEP = (0.7, 0.8, 0.85, 0.9, 0.95, 0.99999)

LOWER_IS_BETTER = {"rel": True, "sq_rel": True, "rms": True, "rms_log": True,
                   "delta1": False, "delta2": False, "delta3": False}


@dataclass(frozen=True)
class MetricReport:
    rel: float
    sq_rel: float
    rms: float
    rms_log: float
    delta1: float
    delta2: float
    delta3: float
    n_pixels: int
    region: str = "all"  # all | inside_mask | outside_mask

    def __post_init__(self):
        values = [getattr(self, f) for f in METRIC_FIELDS]
        if not all(np.isfinite(values)):
            raise ValueError("metrics must be finite")
        if min(self.rel, self.sq_rel, self.rms, self.rms_log) < 0:
            raise ValueError("error metrics must be nonnegative")
        if not self.delta1 <= self.delta2 <= self.delta3:
            raise ValueError("delta thresholds must be nested")
        if self.n_pixels < 1:
            raise ValueError("report needs at least one pixel")

    def as_dict(self) -> dict:
        d = {f: getattr(self, f) for f in METRIC_FIELDS}
        d["n_pixels"] = self.n_pixels
        d["region"] = self.region
        return d


def compute_metrics(pred, gt, valid, cap: float, region: str = "all") -> MetricReport:
    """Seven-number depth report over valid pixels.

    rel:     mean |y - y*| / y*
    sq_rel:  mean (y - y*)^2 / y*
    rms:     sqrt(mean (y - y*)^2)
    rms_log: sqrt(mean (ln y - ln y*)^2)
    delta^i: fraction with max(y/y*, y*/y) < 1.25^i
    """
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    valid = np.asarray(valid, dtype=bool)
    if pred.shape != gt.shape or valid.shape != pred.shape:
        raise ValueError(f"shape mismatch: pred {pred.shape}, gt {gt.shape}, "
                         f"valid {valid.shape}")
    y = np.clip(pred[valid], DEPTH_FLOOR, cap)
    ystar = np.clip(gt[valid], DEPTH_FLOOR, cap)
    n = y.size
    if n == 0:
        raise ValueError("no valid pixels to evaluate")
    diff = y - ystar
    ratio = np.maximum(y / ystar, ystar / y)
    return MetricReport(
        rel=float(np.mean(np.abs(diff) / ystar)),
        sq_rel=float(np.mean(diff ** 2 / ystar)),
        rms=float(np.sqrt(np.mean(diff ** 2))),
        rms_log=float(np.sqrt(np.mean((np.log(y) - np.log(ystar)) ** 2))),
        delta1=float(np.mean(ratio < 1.25)),
        delta2=float(np.mean(ratio < 1.25 ** 2)),
        delta3=float(np.mean(ratio < 1.25 ** 3)),
        n_pixels=int(n),
        region=region,
    )


def masked_region_metrics(pred, gt, valid, mask, cap: float):
    """Reports inside (mask == 0, removed/inpainted) and outside (mask == 1).

    A region with no pixels yields None instead of a NaN-filled report.
    """
    mask_values = np.asarray(getattr(mask, "values", mask))
    if hasattr(mask, "mode") and mask.mode != "hard":
        raise ValueError("region breakdown needs a hard mask")
    mask_values = mask_values.reshape(np.asarray(pred).shape)
    if not np.isin(mask_values, (0.0, 1.0)).all():
        raise ValueError("region breakdown needs a hard mask")
    valid = np.asarray(valid, dtype=bool)
    inside_sel = valid & (mask_values == 0)
    outside_sel = valid & (mask_values == 1)

    def region_report(sel, name):
        if not sel.any():
            return None
        return compute_metrics(pred, gt, sel, cap, region=name)

    return (region_report(inside_sel, "inside_mask"),
            region_report(outside_sel, "outside_mask"))


@dataclass(frozen=True)
class ErrorReductionReport:
    """Per-sample metric differences (pipeline A minus pipeline B), sorted."""

    deltas: tuple[float, ...]
    fraction_improved: float
    metric: str


def per_sample_error_reduction(pipeline_a, pipeline_b, dataset, cap: float,
                               metric: str = "rms_log") -> ErrorReductionReport:
    """Sorted per-sample difference of ``metric`` between two pipelines.

    Negative entries mean pipeline A beats pipeline B on that sample (for
    lower-is-better metrics; the improvement sign flips for deltas).
    """
    if metric not in METRIC_FIELDS:
        raise ValueError(f"unknown metric {metric!r}")
    if len(dataset) == 0:
        raise ValueError("dataset is empty")
    deltas = []
    for sample in dataset:
        ra = compute_metrics(pipeline_a.predict_depth(sample), sample.depth,
                             sample.valid, cap)
        rb = compute_metrics(pipeline_b.predict_depth(sample), sample.depth,
                             sample.valid, cap)
        deltas.append(getattr(ra, metric) - getattr(rb, metric))
    deltas.sort()
    improved = [d < 0 for d in deltas] if LOWER_IS_BETTER[metric] else \
        [d > 0 for d in deltas]
    return ErrorReductionReport(deltas=tuple(deltas),
                                fraction_improved=float(np.mean(improved)),
                                metric=metric)


def evaluate_pipeline(pipeline, dataset, cap: float) -> MetricReport:
    """Aggregate metrics over a dataset, pixels pooled across samples."""
    if len(dataset) == 0:
        raise ValueError("dataset is empty")
    preds = np.stack([pipeline.predict_depth(s) for s in dataset])
    gts = np.stack([s.depth for s in dataset])
    valids = np.stack([s.valid for s in dataset])
    return compute_metrics(preds, gts, valids, cap)


def mean_keep_rate(pipeline, dataset) -> float:
    rates = [float(pipeline.predict_mask(s).mean()) for s in dataset]
    return float(np.mean(rates))


@dataclass(frozen=True)
class RhoSweepRow:
    rho: float
    keep_rate: float
    report: MetricReport


def rho_sweep(config, data, test_samples, rho_values=DEFAULT_RHO_SWEEP,
              base_bundle=None, log=None) -> list[RhoSweepRow]:
    """Retrain the mask-dependent stages per keep-rate target and evaluate.

    Shares the depth/translator pretraining (stages A and B) across all rho
    values, then reruns attention, inpainting and fine-tuning for each.
    """
    from .trainer import (run_protocol, stage_finetune, stage_train_attention,
                          stage_train_inpainter)

    for rho in rho_values:
        if not 0 < rho < 1:
            raise ValueError(f"rho values must lie in (0, 1), got {rho}")
    if base_bundle is None:
        base_bundle = run_protocol(config, data, out_dir=None, log=log,
                                   stop_after="B")
    rows = []
    for rho in rho_values:
        cfg = replace(config, rho=rho)
        bundle = replace(copy.deepcopy(base_bundle), config=cfg)
        bundle = stage_train_attention(cfg, data, bundle, log)
        bundle = stage_train_inpainter(cfg, data, bundle, log)
        bundle = stage_finetune(cfg, data, bundle, log)
        pipeline = bundle.pipeline()
        rows.append(RhoSweepRow(
            rho=rho,
            keep_rate=mean_keep_rate(pipeline, test_samples),
            report=evaluate_pipeline(pipeline, test_samples, cap=cfg.depth_max),
        ))
    return rows


def report_tsv(reports: list[MetricReport], labels: list[str] | None = None) -> str:
    """Render reports as a TSV table, one row per report."""
    header = ["label"] + list(METRIC_FIELDS) + ["n_pixels", "region"]
    lines = ["\t".join(header)]
    for i, rep in enumerate(reports):
        label = labels[i] if labels else f"row{i}"
        cells = [label] + [f"{getattr(rep, f):.6f}" for f in METRIC_FIELDS]
        cells += [str(rep.n_pixels), rep.region]
        lines.append("\t".join(cells))
    return "\n".join(lines) + "\n"
