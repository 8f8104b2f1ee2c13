"""Shared-encoder inference: equivalence and latency.

Shows that encoding the depth image once and reusing it across a batch of
grasp poses gives the same probabilities as running the full network per
grasp, then benchmarks both pipelines over batch sizes.
"""

import numpy as np

from vgq.cropping import CropConfig
from vgq.geometry import UnitQuaternion
from vgq.inference import GraspQuery, bench, predict, predict_shared, preprocess_fvgq, preprocess_vgq
from vgq.nn import fvgq_spec, random_checkpoint, vgq_spec

rng = np.random.default_rng(0)
crop = CropConfig()
ck_fast = random_checkpoint(fvgq_spec(scaled=True), rng)
ck_slow = random_checkpoint(vgq_spec(scaled=True), rng)

depth = (0.7 + 0.05 * rng.standard_normal((300, 300))).astype(np.float32)
queries = [
    GraspQuery(
        150 + rng.uniform(-24, 24), 150 + rng.uniform(-24, 24),
        rng.uniform(0.4, 1.0), UnitQuaternion(*rng.standard_normal(4)),
    )
    for _ in range(64)
]

image, poses, ok = preprocess_fvgq(depth, queries, crop)
shared = predict_shared(ck_fast, image, poses)
naive = np.concatenate([predict(ck_fast, image, poses[i : i + 1]) for i in range(len(queries))])
print(f"shared vs per-grasp forward: max abs diff {np.abs(shared - naive).max():.2e}")

print("\nbenchmark (means over 100 runs):")
report = bench({"vgq": ck_slow, "fvgq": ck_fast}, ks=(32, 64, 128), repeats=100, warmup=20)
print(report.to_csv())
for k in (32, 64, 128):
    print(
        f"k={k:3d}: predict speedup x{report.speedup('predict', k):5.1f}   "
        f"preprocess speedup x{report.speedup('preprocess', k):5.1f}"
    )
