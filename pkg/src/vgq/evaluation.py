"""Metrics, camera-parameter grid reports, subset evaluations and the
ablation runner."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .cropping import CropConfig
from .dataset import SplitManifest
from .nn import (
    Checkpoint,
    TrainConfig,
    TrainingData,
    best_threshold_metrics,
    fvgq_spec,
    normalize_images,
    normalize_poses,
    train,
    vgq_spec,
)
from .inference import predict
from .seeding import substream
from .training_data import build_arrays, split_records


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


@dataclass(frozen=True)
class MetricsResult:
    tpr: float
    tnr: float
    balanced_accuracy: float
    accuracy: float
    counts: ConfusionCounts


def metrics(predictions, labels, threshold: float = 0.5) -> MetricsResult:
    """TPR, TNR and their mean (balanced accuracy) at a decision threshold.

    predictions are success probabilities; labels are 0/1. Raises when labels
    contain a single class, where balanced accuracy is undefined.
    """
    predictions = np.asarray(predictions, dtype=float)
    labels = np.asarray(labels, dtype=int)
    if len(predictions) != len(labels):
        raise ValueError("predictions and labels must have equal length")
    pos = labels == 1
    neg = labels == 0
    if not pos.any() or not neg.any():
        raise ValueError(
            "labels contain a single class: balanced accuracy is undefined; "
            "evaluate on a subset with both outcomes"
        )
    decided = predictions > threshold
    tp = int(np.sum(decided & pos))
    fn = int(np.sum(~decided & pos))
    tn = int(np.sum(~decided & neg))
    fp = int(np.sum(decided & neg))
    tpr = tp / (tp + fn)
    tnr = tn / (tn + fp)
    return MetricsResult(
        tpr=tpr,
        tnr=tnr,
        balanced_accuracy=(tpr + tnr) / 2.0,
        accuracy=(tp + tn) / len(labels),
        counts=ConfusionCounts(tp=tp, fp=fp, tn=tn, fn=fn),
    )


# ---------------------------------------------------------------------------
# camera-parameter grid


@dataclass
class GridCell:
    r_bin: int
    elev_bin: int
    count: int
    tpr: float  # nan when the cell has no positives
    tnr: float  # nan when the cell has no negatives


@dataclass
class GridReport:
    """Per-cell TPR/TNR over (camera radius x elevation) bins.

    The summary statistics are the unweighted mean and standard deviation
    across non-empty cells; count-weighted means are reported alongside since
    cells are generally unevenly populated.
    """

    r_step: float
    elev_step: float
    r_min: float
    cells: list

    def summary(self) -> dict:
        tprs = np.array([c.tpr for c in self.cells if not math.isnan(c.tpr)])
        tnrs = np.array([c.tnr for c in self.cells if not math.isnan(c.tnr)])
        w_tpr = np.array([c.count for c in self.cells if not math.isnan(c.tpr)], dtype=float)
        w_tnr = np.array([c.count for c in self.cells if not math.isnan(c.tnr)], dtype=float)
        return {
            "tpr_mean": float(tprs.mean()) if len(tprs) else float("nan"),
            "tpr_std": float(tprs.std()) if len(tprs) else float("nan"),
            "tnr_mean": float(tnrs.mean()) if len(tnrs) else float("nan"),
            "tnr_std": float(tnrs.std()) if len(tnrs) else float("nan"),
            "tpr_weighted_mean": float((tprs * w_tpr).sum() / w_tpr.sum()) if len(tprs) else float("nan"),
            "tnr_weighted_mean": float((tnrs * w_tnr).sum() / w_tnr.sum()) if len(tnrs) else float("nan"),
            "cells": len(self.cells),
            "records": int(sum(c.count for c in self.cells)),
        }

    def to_csv(self) -> str:
        lines = ["r_bin,elev_bin,count,tpr,tnr"]
        for c in sorted(self.cells, key=lambda c: (c.r_bin, c.elev_bin)):
            lines.append(f"{c.r_bin},{c.elev_bin},{c.count},{c.tpr:.4f},{c.tnr:.4f}")
        return "\n".join(lines) + "\n"

    def to_matrix(self, which: str = "tpr") -> str:
        """Gnuplot-style matrix (rows: radius bins, columns: elevation bins)."""
        if not self.cells:
            return "\n"
        rs = sorted({c.r_bin for c in self.cells})
        es = sorted({c.elev_bin for c in self.cells})
        table = {(c.r_bin, c.elev_bin): getattr(c, which) for c in self.cells}
        lines = []
        for r in rs:
            lines.append(" ".join(f"{table.get((r, e), float('nan')):.4f}" for e in es))
        return "\n".join(lines) + "\n"


def grid_report(
    predictions,
    records,
    r_step: float = 0.05,
    elev_step: float = 5.0,
    r_min: float = 0.4,
    threshold: float = 0.5,
) -> GridReport:
    """Bin records by camera radius and elevation and report per-cell rates."""
    predictions = np.asarray(predictions, dtype=float)
    if len(predictions) != len(records):
        raise ValueError("one prediction per record required")
    cells: dict[tuple[int, int], list[int]] = {}
    for i, rec in enumerate(records):
        # nudge to keep boundary values in their nominal bin despite rounding
        key = (int((rec.cam_r - r_min) / r_step + 1e-9), int(rec.cam_elev / elev_step + 1e-9))
        cells.setdefault(key, []).append(i)
    out = []
    for (rb, eb), idx in sorted(cells.items()):
        idx = np.array(idx)
        labels = np.array([records[i].positive for i in idx], dtype=bool)
        decided = predictions[idx] > threshold
        tpr = float((decided[labels]).mean()) if labels.any() else float("nan")
        tnr = float((~decided[~labels]).mean()) if (~labels).any() else float("nan")
        out.append(GridCell(r_bin=rb, elev_bin=eb, count=len(idx), tpr=tpr, tnr=tnr))
    return GridReport(r_step=r_step, elev_step=elev_step, r_min=r_min, cells=out)


# ---------------------------------------------------------------------------
# subset evaluation


TOP_GRASP_PRESET = {"beta_max": 5.0, "elev_max": 5.7}


@dataclass
class SubsetResult:
    name: str
    n: int
    metrics: MetricsResult | None
    note: str = ""


@dataclass
class EvalSet:
    """Prepared network inputs paired with their records."""

    images: np.ndarray
    poses: np.ndarray
    labels: np.ndarray
    records: list


def build_eval_set(shards, records, variant: str, crop: CropConfig, rng=None, kappa=None) -> EvalSet:
    images, poses, labels = build_arrays(shards, records, variant, crop, rng, kappa)
    return EvalSet(images=images, poses=poses, labels=labels, records=list(records))


def evaluate(checkpoint: Checkpoint, evalset: EvalSet, threshold: float | None = None):
    """Predictions plus metrics for a prepared eval set.

    The decision threshold defaults to the one calibrated on the validation
    split during training (checkpoint.threshold); pass an explicit value to
    override.
    """
    if threshold is None:
        threshold = checkpoint.threshold
    images = normalize_images(evalset.images, checkpoint.stats)
    poses = normalize_poses(evalset.poses, checkpoint.stats, checkpoint.spec.image_px)
    preds = predict(checkpoint, images, poses)
    return preds, metrics(preds, evalset.labels, threshold)


def subset_eval(
    checkpoint: Checkpoint, evalset: EvalSet, preset: str = "full", threshold: float | None = None
) -> SubsetResult:
    """Metrics on a filtered subset of the eval set.

    Presets: "full" (identity) and "top_grasp" (beta <= 5 degrees, camera
    elevation <= 5.7 degrees). Single-class subsets are reported as undefined
    rather than silently skipped.
    """
    if threshold is None:
        threshold = checkpoint.threshold
    if preset == "full":
        keep = np.ones(len(evalset.records), dtype=bool)
    elif preset == "top_grasp":
        keep = np.array(
            [
                r.beta <= TOP_GRASP_PRESET["beta_max"] and r.cam_elev <= TOP_GRASP_PRESET["elev_max"]
                for r in evalset.records
            ]
        )
    else:
        raise ValueError(f"unknown preset {preset!r}")
    n = int(keep.sum())
    if n == 0:
        return SubsetResult(name=preset, n=0, metrics=None, note="empty subset")
    images = normalize_images(evalset.images[keep], checkpoint.stats)
    poses = normalize_poses(evalset.poses[keep], checkpoint.stats, checkpoint.spec.image_px)
    preds = predict(checkpoint, images, poses)
    labels = evalset.labels[keep]
    try:
        m = metrics(preds, labels, threshold)
    except ValueError:
        return SubsetResult(
            name=preset, n=n, metrics=None, note="single-class subset: balanced accuracy undefined"
        )
    return SubsetResult(name=preset, n=n, metrics=m)


# ---------------------------------------------------------------------------
# ablations


@dataclass
class AblationPoint:
    point: str
    mean_ba: float
    ci95: float
    seed_bas: list
    train_val_gap: float  # mean (train BA - val BA) at the end of training


@dataclass
class AblationReport:
    kind: str
    points: list

    def to_csv(self) -> str:
        lines = ["kind,point,mean_ba,ci95,train_val_gap,seed_bas"]
        for p in self.points:
            bas = ";".join(f"{b:.4f}" for b in p.seed_bas)
            lines.append(
                f"{self.kind},{p.point},{p.mean_ba:.4f},{p.ci95:.4f},{p.train_val_gap:.4f},{bas}"
            )
        return "\n".join(lines) + "\n"

    def summary_text(self) -> str:
        lines = [f"ablation: {self.kind}"]
        for p in self.points:
            lines.append(
                f"  {p.point}: BA {100 * p.mean_ba:.1f}% +/- {100 * p.ci95:.1f} "
                f"(train-val gap {100 * p.train_val_gap:.1f})"
            )
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class AblationConfig:
    seeds: int = 8
    train_cfg: TrainConfig = field(default_factory=lambda: TrainConfig(max_iterations=1500, val_interval=250))
    crop: CropConfig = field(default_factory=CropConfig)
    scaled: bool = True
    test_subsample: int = 6000  # cap on evaluation set size per run


ABLATION_KINDS = ("dataset_size", "extra_fc", "kappa")


def run_ablation(
    kind: str,
    grid,
    shards,
    records,
    manifest: SplitManifest,
    cfg: AblationConfig,
    seed: int = 0,
) -> AblationReport:
    """Train small networks over a grid of one design knob, several seeds per
    point, and report mean test balanced accuracy with a 95 percent interval
    (1.96 * std / sqrt(seeds)).

    kinds: "dataset_size" (fraction of the train split), "extra_fc" (second
    wide merge layer on/off), "kappa" (crop displacement range).
    """
    if kind not in ABLATION_KINDS:
        raise ValueError(f"unknown ablation kind {kind!r}; expected one of {ABLATION_KINDS}")
    train_recs, val_recs, test_recs = split_records(records, manifest)
    points = []
    for point in grid:
        bas, gaps = [], []
        for s in range(cfg.seeds):
            rng = substream(seed, "ablation", kind, str(point), s)
            variant = "fvgq" if kind == "kappa" else "vgq"
            kappa = float(point) if kind == "kappa" else None
            extra_fc = bool(point) if kind == "extra_fc" else True
            spec = (
                fvgq_spec(scaled=cfg.scaled, extra_fc=extra_fc)
                if variant == "fvgq"
                else vgq_spec(scaled=cfg.scaled, extra_fc=extra_fc)
            )
            tr = train_recs
            if kind == "dataset_size":
                n_keep = max(cfg.train_cfg.batch_size, int(float(point) * len(train_recs)))
                if n_keep > len(train_recs):
                    points.append(AblationPoint(str(point), float("nan"), 0.0, [], 0.0))
                    break
                idx = rng.choice(len(train_recs), size=n_keep, replace=False)
                tr = [train_recs[i] for i in sorted(idx)]
            crop = cfg.crop if kappa is None else replace(cfg.crop, kappa=max(kappa, 0.0))
            tri = build_arrays(shards, tr, variant, crop, rng, kappa)
            vai = build_arrays(shards, _subsample(val_recs, cfg.test_subsample, rng), variant, crop, rng, kappa)
            tei = build_arrays(shards, _subsample(test_recs, cfg.test_subsample, rng), variant, crop, rng, kappa)
            data = TrainingData(*tri, *vai)
            tcfg = replace(cfg.train_cfg, seed=int(rng.integers(2**31)))
            result = train(spec, data, tcfg)
            ckpt = result.checkpoint
            te_images = normalize_images(tei[0], ckpt.stats)
            te_poses = normalize_poses(tei[1], ckpt.stats, spec.image_px)
            te_preds = predict(ckpt, te_images, te_poses)
            bas.append(metrics(te_preds, tei[2], ckpt.threshold).balanced_accuracy)
            # overfitting signature: train-set BA minus validation BA, both
            # at their own calibrated cuts
            n_gap = min(len(tri[0]), cfg.test_subsample)
            tr_images = normalize_images(tri[0][:n_gap], ckpt.stats)
            tr_poses = normalize_poses(tri[1][:n_gap], ckpt.stats, spec.image_px)
            tr_preds = predict(ckpt, tr_images, tr_poses)
            _, _, tr_ba, _ = best_threshold_metrics(tr_preds, tri[2][:n_gap])
            gaps.append(tr_ba - result.best_val_ba)
        else:
            bas_arr = np.array(bas)
            points.append(
                AblationPoint(
                    point=str(point),
                    mean_ba=float(bas_arr.mean()),
                    ci95=float(1.96 * bas_arr.std() / math.sqrt(len(bas_arr))),
                    seed_bas=bas,
                    train_val_gap=float(np.nanmean(gaps)),
                )
            )
    return AblationReport(kind=kind, points=points)


def _subsample(records, cap: int, rng: np.random.Generator):
    if len(records) <= cap:
        return records
    idx = rng.choice(len(records), size=cap, replace=False)
    return [records[i] for i in sorted(idx)]
