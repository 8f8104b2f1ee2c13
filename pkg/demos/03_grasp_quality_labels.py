"""Ground-truth grasp labeling on a primitive.

Samples antipodal grasps, computes their robust wrench-space quality, then
shows how random spins about the contact axis interact with collision
checking to produce the final labels.
"""

import numpy as np

from vgq.meshes import compute_stable_poses, make_cylinder
from vgq.quality import QualityConfig, check_collision, quality_label, robust_quality, sample_antipodal

rng = np.random.default_rng(1)
mesh = make_cylinder(0.022, 0.07, object_id="demo_cyl")
cfg = QualityConfig()

grasps = sample_antipodal(mesh, cfg.friction, 40, rng)
print(f"sampled {len(grasps)} antipodal grasps on {mesh.object_id}")

rhos = np.array([robust_quality(mesh, g, cfg, np.random.default_rng(100 + i)) for i, g in enumerate(grasps)])
print(f"robust quality: median={np.median(rhos):.4f}  90th pct={np.percentile(rhos, 90):.4f}")
print(f"fraction above the positive threshold ({cfg.threshold}): {(rhos > cfg.threshold).mean():.2f}")

stable = compute_stable_poses(mesh)[0]
mesh_w = mesh.transformed(stable.transform)
print("\n== random spins vs. collisions (grasps keep quality only when the approach is clear) ==")
n_free = n_hit = 0
for i, g in enumerate(grasps):
    g_w = g.transformed(stable.transform).spun(float(rng.uniform(0, 360)))
    label = quality_label(mesh_w, g_w, rhos[i], cfg)
    n_free += label.collision_free
    n_hit += not label.collision_free
print(f"collision-free {n_free}, colliding {n_hit} -> positives {sum(1 for i, g in enumerate(grasps))}")
pos = 0
for i, g in enumerate(grasps):
    g_w = g.transformed(stable.transform).spun(float(rng.uniform(0, 360)))
    pos += quality_label(mesh_w, g_w, rhos[i], cfg).positive
print(f"positive labels under a fresh spin draw: {pos}/{len(grasps)}")
