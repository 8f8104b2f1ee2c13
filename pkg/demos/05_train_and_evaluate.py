"""Train the small two-stream network on a mini dataset and evaluate it.

Renders a small dataset, runs the sampling pipeline, trains the desk-scale
network briefly and reports test metrics plus the camera-parameter grid.
"""

import numpy as np

from vgq.cropping import CropConfig
from vgq.dataset import (
    BalanceConfig,
    RenderConfig,
    balance_positivity,
    filter_psi,
    records_of,
    render_dataset,
    split_objects,
    uniform_bin_undersample,
)
from vgq.evaluation import grid_report, metrics
from vgq.inference import predict
from vgq.meshes import generate_primitive_set
from vgq.nn import TrainConfig, normalize_images, normalize_poses, train, vgq_spec
from vgq.quality import QualityConfig
from vgq.seeding import substream
from vgq.training_data import build_arrays, build_training_data

SEED = 13
meshes = generate_primitive_set(8, seed=2)
cfg = RenderConfig(cameras_per_pose=6, grasps_per_object=80, quality=QualityConfig(samples=8))
print("rendering ...")
shards = render_dataset(meshes, cfg, seed=SEED)
records = records_of(shards)

balance = BalanceConfig()
sampled = uniform_bin_undersample(
    balance_positivity(filter_psi(records, balance.psi_max), balance, substream(SEED, "b")),
    balance,
    substream(SEED, "u"),
)
manifest = split_objects(sorted({r.object_id for r in records}), (0.6, 0.2, 0.2), substream(SEED, "s"))
data, _, test_recs = build_training_data(shards, sampled, manifest, "vgq", CropConfig())
print(f"train/val/test records: {len(data.train_images)}/{len(data.val_images)}/{len(test_recs)}")

print("training the scaled network ...")
result = train(vgq_spec(scaled=True), data, TrainConfig(max_iterations=800, val_interval=200, seed=1))
print(f"best val balanced accuracy: {result.best_val_ba:.3f}")

ckpt = result.checkpoint
te_images, te_poses, te_labels = build_arrays(shards, test_recs, "vgq", CropConfig())
preds = predict(ckpt, normalize_images(te_images, ckpt.stats), normalize_poses(te_poses, ckpt.stats))
m = metrics(preds, te_labels)
print(f"test: TPR {m.tpr:.3f}  TNR {m.tnr:.3f}  BA {m.balanced_accuracy:.3f} on {m.counts.total} records")

grid = grid_report(preds, test_recs)
s = grid.summary()
print(
    f"camera grid ({s['cells']} cells): TPR {s['tpr_mean']:.3f}+/-{s['tpr_std']:.3f}  "
    f"TNR {s['tnr_mean']:.3f}+/-{s['tnr_std']:.3f}"
)
