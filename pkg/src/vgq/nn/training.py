"""Momentum-SGD training loop with stepped learning-rate decay, validation
tracking by balanced accuracy, and binary checkpoint files."""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..fileio import ShardFormatError, read_tensor, write_tensor
from .network import NetworkSpec, forward, forward_backward, init_params

CHECKPOINT_MAGIC = b"VGQW"


@dataclass(frozen=True)
class TrainConfig:
    momentum: float = 0.9
    base_lr: float = 0.001
    lr_decay: float = 0.95
    decay_interval: int = 50_000
    l2: float = 0.0005
    batch_size: int = 64
    max_iterations: int = 10_000
    val_interval: int = 500
    seed: int = 0

    def __post_init__(self):
        for name in ("momentum", "base_lr", "lr_decay", "l2"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0 or (name in ("base_lr", "lr_decay") and v == 0.0):
                raise ValueError(f"{name} must lie in (0, 1]")


@dataclass(frozen=True)
class NormStats:
    """Dataset statistics baked into a checkpoint so inference preprocessing
    matches training."""

    image_mean: float
    image_std: float
    z_mean: float
    z_std: float

    def to_dict(self) -> dict:
        return {
            "image_mean": self.image_mean,
            "image_std": self.image_std,
            "z_mean": self.z_mean,
            "z_std": self.z_std,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NormStats":
        return cls(d["image_mean"], d["image_std"], d["z_mean"], d["z_std"])

    @classmethod
    def identity(cls) -> "NormStats":
        return cls(0.0, 1.0, 0.0, 1.0)


@dataclass
class Checkpoint:
    spec: NetworkSpec
    params: dict
    iteration: int
    stats: NormStats
    # decision cut calibrated on the validation split during training
    threshold: float = 0.5

    @property
    def spec_hash(self) -> str:
        return self.spec.spec_hash()


@dataclass
class TrainResult:
    checkpoint: Checkpoint
    history: list  # rows of (iteration, loss, lr, val_tpr, val_tnr, val_ba)
    best_val_ba: float


def learning_rate(cfg: TrainConfig, iteration: int) -> float:
    """base_lr decayed by lr_decay every decay_interval iterations."""
    return cfg.base_lr * cfg.lr_decay ** (iteration // cfg.decay_interval)


def sgd_step(params: dict, grads: dict, cfg: TrainConfig, iteration: int, velocity: dict | None = None):
    """Classical momentum update: v <- m*v + g; w <- w - lr(iteration)*v.

    Mutates params in place; returns (params, velocity) so callers can carry
    the velocity state across steps.
    """
    lr = learning_rate(cfg, iteration)
    if velocity is None:
        velocity = {k: np.zeros_like(v) for k, v in params.items()}
    for k in params:
        velocity[k] = cfg.momentum * velocity[k] + grads[k]
        params[k] -= (lr * velocity[k]).astype(params[k].dtype, copy=False)
    return params, velocity


def normalize_images(images: np.ndarray, stats: NormStats) -> np.ndarray:
    return (images - stats.image_mean) / stats.image_std


def normalize_poses(poses: np.ndarray, stats: NormStats, out_px: int = 32) -> np.ndarray:
    """z is standardized; u, v (when present) are divided by half of the
    output image width so they lie in [-1, 1]; the quaternion is fed raw."""
    poses = poses.astype(poses.dtype, copy=True)
    if poses.shape[1] == 5:
        poses[:, 0] = (poses[:, 0] - stats.z_mean) / stats.z_std
    elif poses.shape[1] == 7:
        poses[:, 0] /= out_px / 2.0
        poses[:, 1] /= out_px / 2.0
        poses[:, 2] = (poses[:, 2] - stats.z_mean) / stats.z_std
    else:
        raise ValueError(f"pose rows must have 5 or 7 entries, got {poses.shape[1]}")
    return poses


@dataclass
class TrainingData:
    """Raw (unnormalized) network inputs for one variant."""

    train_images: np.ndarray  # (n, 1, px, px) float32
    train_poses: np.ndarray  # (n, 5|7) float32
    train_labels: np.ndarray  # (n,) int
    val_images: np.ndarray
    val_poses: np.ndarray
    val_labels: np.ndarray

    def compute_stats(self) -> NormStats:
        z_col = 0 if self.train_poses.shape[1] == 5 else 2
        z = self.train_poses[:, z_col]
        return NormStats(
            image_mean=float(self.train_images.mean()),
            image_std=float(max(self.train_images.std(), 1e-8)),
            z_mean=float(z.mean()),
            z_std=float(max(z.std(), 1e-8)),
        )


def best_threshold_metrics(scores: np.ndarray, labels: np.ndarray):
    """(tpr, tnr, balanced accuracy, threshold) at the score cut maximizing
    balanced accuracy.

    A calibrated model on an imbalanced set keeps every probability on one
    side of 0.5, which makes the fixed-cut balanced accuracy degenerate; the
    optimal cut measures the ranking instead. Returns nans for single-class
    labels.
    """
    pos = labels == 1
    neg = ~pos
    if not pos.any() or not neg.any():
        nan = float("nan")
        return nan, nan, nan, 0.5
    order = np.argsort(scores, kind="stable")
    sorted_pos = pos[order]
    # cut after index i: predict positive for scores > scores[order[i]]
    fn = np.cumsum(sorted_pos)  # positives at or below the cut
    tn = np.cumsum(~sorted_pos)
    n_pos, n_neg = int(pos.sum()), int(neg.sum())
    tpr = (n_pos - fn) / n_pos
    tnr = tn / n_neg
    ba = (tpr + tnr) / 2.0
    best = int(np.argmax(ba))
    return float(tpr[best]), float(tnr[best]), float(ba[best]), float(scores[order][best])


def _predict_in_batches(spec, params, images, poses, batch: int = 512) -> np.ndarray:
    out = []
    for i in range(0, len(images), batch):
        _, probs = forward(spec, params, images[i : i + batch], poses[i : i + batch])
        out.append(probs)
    return np.concatenate(out) if out else np.zeros((0, 2))


def train(
    spec: NetworkSpec,
    data: TrainingData,
    cfg: TrainConfig,
    log_path=None,
    init: dict | None = None,
) -> TrainResult:
    """Train on the train split, validate every val_interval iterations and
    keep the parameters with the best validation balanced accuracy.

    Deterministic for a given cfg.seed. When log_path is given the history is
    also written as CSV with columns iteration,loss,lr,val_tpr,val_tnr,val_ba.
    """
    if len(data.train_images) == 0 or len(data.val_images) == 0:
        raise ValueError("training requires non-empty train and val splits")
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0x7472]))
    params = init if init is not None else init_params(spec, rng)
    stats = data.compute_stats()

    tr_images = normalize_images(data.train_images, stats)
    tr_poses = normalize_poses(data.train_poses, stats, spec.image_px)
    tr_labels = np.asarray(data.train_labels, dtype=int)
    va_images = normalize_images(data.val_images, stats)
    va_poses = normalize_poses(data.val_poses, stats, spec.image_px)
    va_labels = np.asarray(data.val_labels, dtype=int)

    n = len(tr_images)
    order = rng.permutation(n)
    cursor = 0
    velocity = None
    best_ba = -1.0
    best_threshold = 0.5
    best_params = {k: v.copy() for k, v in params.items()}
    best_iteration = 0
    history: list[tuple] = []

    for iteration in range(cfg.max_iterations):
        if cursor + cfg.batch_size > n:
            order = rng.permutation(n)
            cursor = 0
        idx = order[cursor : cursor + cfg.batch_size]
        cursor += cfg.batch_size
        loss_value, _, grads = forward_backward(
            spec, params, tr_images[idx], tr_poses[idx], tr_labels[idx], cfg.l2
        )
        params, velocity = sgd_step(params, grads, cfg, iteration, velocity)

        is_last = iteration == cfg.max_iterations - 1
        if (iteration + 1) % cfg.val_interval == 0 or is_last:
            probs = _predict_in_batches(spec, params, va_images, va_poses)
            tpr, tnr, ba, thr = best_threshold_metrics(probs[:, 1], va_labels)
            history.append((iteration + 1, loss_value, learning_rate(cfg, iteration), tpr, tnr, ba))
            if ba > best_ba:
                best_ba = ba
                best_threshold = thr
                best_params = {k: v.copy() for k, v in params.items()}
                best_iteration = iteration + 1

    if log_path is not None:
        with open(log_path, "w", encoding="utf-8") as fh:
            fh.write("iteration,loss,lr,val_tpr,val_tnr,val_ba\n")
            for row in history:
                fh.write(",".join(f"{v:.6g}" if isinstance(v, float) else str(v) for v in row) + "\n")

    ckpt = Checkpoint(
        spec=spec,
        params=best_params,
        iteration=best_iteration,
        stats=stats,
        threshold=best_threshold,
    )
    return TrainResult(checkpoint=ckpt, history=history, best_val_ba=best_ba)


# ---------------------------------------------------------------------------
# checkpoint files


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    """"VGQW" | u16 hash len | hash | u32 json len | json | u32 n | blocks."""
    header = {
        "spec": ckpt.spec.to_dict(),
        "iteration": ckpt.iteration,
        "stats": ckpt.stats.to_dict(),
        "threshold": ckpt.threshold,
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    digest = ckpt.spec_hash.encode("ascii")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<H", len(digest)))
        fh.write(digest)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        names = sorted(ckpt.params)
        fh.write(struct.pack("<I", len(names)))
        for name in names:
            raw = name.encode("utf-8")
            fh.write(struct.pack("<H", len(raw)))
            fh.write(raw)
            write_tensor(fh, ckpt.params[name])


def load_checkpoint(path, expected_spec: NetworkSpec | None = None) -> Checkpoint:
    with open(path, "rb") as fh:
        if fh.read(4) != CHECKPOINT_MAGIC:
            raise ShardFormatError(f"{Path(path).name}: not a checkpoint file")
        (hlen,) = struct.unpack("<H", fh.read(2))
        digest = fh.read(hlen).decode("ascii")
        (jlen,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(jlen).decode("utf-8"))
        spec = NetworkSpec.from_dict(header["spec"])
        if spec.spec_hash() != digest:
            raise ShardFormatError("checkpoint hash does not match its stored spec")
        if expected_spec is not None and expected_spec.spec_hash() != digest:
            raise ShardFormatError("checkpoint was created for a different network spec")
        (n,) = struct.unpack("<I", fh.read(4))
        params = {}
        for _ in range(n):
            (nlen,) = struct.unpack("<H", fh.read(2))
            name = fh.read(nlen).decode("utf-8")
            params[name] = read_tensor(fh)
    return Checkpoint(
        spec=spec,
        params=params,
        iteration=int(header["iteration"]),
        stats=NormStats.from_dict(header["stats"]),
        threshold=float(header.get("threshold", 0.5)),
    )


def random_checkpoint(spec: NetworkSpec, rng: np.random.Generator, stats: NormStats | None = None) -> Checkpoint:
    """Untrained checkpoint (useful for equivalence and latency tests)."""
    return Checkpoint(
        spec=spec,
        params=init_params(spec, rng),
        iteration=0,
        stats=stats if stats is not None else NormStats.identity(),
    )
