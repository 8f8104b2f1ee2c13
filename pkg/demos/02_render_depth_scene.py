"""Depth rendering of a primitive resting on the table.

Places a box in its most likely stable pose, renders it from three camera
elevations and prints depth statistics; saves PNG previews when matplotlib
is available.
"""

import numpy as np

from vgq.geometry import SphericalCameraPose, camera_extrinsics
from vgq.meshes import compute_stable_poses, make_box
from vgq.rendering import default_intrinsics, render_depth

mesh = make_box([0.06, 0.04, 0.05], "demo_box")
poses = compute_stable_poses(mesh)
print(f"{mesh}: {len(poses)} stable poses, most likely p={poses[0].probability:.2f}")

intr = default_intrinsics(300)
images = []
for elev in (15.0, 40.0, 65.0):
    cam = camera_extrinsics(SphericalCameraPose(0.6, 30.0, elev))
    depth = render_depth(mesh, poses[0].transform, cam, intr)
    images.append((elev, depth.data))
    print(
        f"elev={elev:4.1f}: depth min={depth.data.min():.3f} max={depth.data.max():.3f} "
        f"(object pixels: {(depth.data < depth.data.max() - 1e-4).sum()})"
    )

try:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, axes = plt.subplots(1, len(images), figsize=(4 * len(images), 4))
    for ax, (elev, data) in zip(axes, images):
        ax.imshow(data, cmap="viridis")
        ax.set_title(f"elevation {elev:.0f}")
        ax.axis("off")
    fig.savefig("depth_scenes.png", dpi=110, bbox_inches="tight")
    print("wrote depth_scenes.png")
except ImportError:
    print("matplotlib not installed; skipping previews")
