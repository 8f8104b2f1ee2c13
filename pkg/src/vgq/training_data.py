"""Assemble network input arrays from rendered shards and sampled records.

The centered-crop variant crops each record's depth image around the grasp
projection; the decoupled variant crops around a displaced center so the
grasp lands at a random (u, v) offset within the configured kappa, which is
what makes the shared-encoder trick possible at inference time.
"""

from __future__ import annotations

import numpy as np

from .cropping import CropConfig, crop_and_resize, image_center
from .dataset import GraspRecord, RenderShard, SplitManifest
from .nn import TrainingData


def _source_center(record: GraspRecord, image: np.ndarray, scale: float) -> tuple[float, float]:
    cx, cy = image_center(image)
    return cx + record.u * scale, cy + record.v * scale


def build_arrays(
    shards,
    records,
    variant: str,
    crop: CropConfig,
    rng: np.random.Generator | None = None,
    kappa: float | None = None,
):
    """(images, poses, labels) network inputs for a list of records.

    variant "vgq": one crop centered on each grasp, pose rows (z, q).
    variant "fvgq": per record the crop center is displaced so the grasp sits
    at a uniform (u, v) in [-kappa, kappa]^2 output pixels; pose rows
    (u, v, z, q). rng is required for "fvgq".
    """
    if variant not in ("vgq", "fvgq"):
        raise ValueError(f"unknown variant {variant!r}")
    if variant == "fvgq" and rng is None:
        raise ValueError("fvgq array building needs an rng for crop displacement")
    kappa = crop.kappa if kappa is None else kappa
    by_object = {s.meta.get("object_id", i): s for i, s in enumerate(shards)}

    n = len(records)
    pose_dim = 5 if variant == "vgq" else 7
    images = np.empty((n, 1, crop.out_px, crop.out_px), dtype=np.float32)
    poses = np.empty((n, pose_dim), dtype=np.float32)
    labels = np.empty(n, dtype=np.int64)
    for i, r in enumerate(records):
        shard = by_object[r.object_id]
        depth = shard.images[r.image_id]
        grasp_center = _source_center(r, depth, crop.scale)
        if variant == "vgq":
            window_center = grasp_center
            u = v = 0.0
        else:
            u = rng.uniform(-kappa, kappa)
            v = rng.uniform(-kappa, kappa)
            window_center = (grasp_center[0] - u * crop.scale, grasp_center[1] - v * crop.scale)
        out, _ = crop_and_resize(depth, window_center, crop)
        images[i, 0] = out
        q = r.q
        if variant == "vgq":
            poses[i] = (r.z, q.w, q.x, q.y, q.z)
        else:
            poses[i] = (u, v, r.z, q.w, q.x, q.y, q.z)
        labels[i] = int(r.positive)
    return images, poses, labels


def split_records(records, manifest: SplitManifest):
    """Partition records object-wise according to a split manifest."""
    train = [r for r in records if r.object_id in set(manifest.train)]
    val = [r for r in records if r.object_id in set(manifest.val)]
    test = [r for r in records if r.object_id in set(manifest.test)]
    return train, val, test


def build_training_data(
    shards,
    records,
    manifest: SplitManifest,
    variant: str,
    crop: CropConfig,
    rng: np.random.Generator | None = None,
    kappa: float | None = None,
) -> tuple[TrainingData, list[GraspRecord], list[GraspRecord]]:
    """TrainingData for train/val plus the record lists of (val, test)."""
    train_recs, val_recs, test_recs = split_records(records, manifest)
    tr = build_arrays(shards, train_recs, variant, crop, rng, kappa)
    va = build_arrays(shards, val_recs, variant, crop, rng, kappa)
    data = TrainingData(
        train_images=tr[0],
        train_poses=tr[1],
        train_labels=tr[2],
        val_images=va[0],
        val_poses=va[1],
        val_labels=va[2],
    )
    return data, val_recs, test_recs
