"""Spherical camera placement and the relative grasp angles.

Samples camera poses over the full working volume, shows the look-at
extrinsics invariants, and sweeps a grasp's spin about its contact axis to
illustrate how the approach angle (beta) and camera angle (psi) move.
"""

import numpy as np

from vgq.geometry import (
    RigidTransform,
    SphericalCameraPose,
    UnitQuaternion,
    camera_extrinsics,
    camera_position,
    flip_if_below_table,
    grasp_beta,
    relative_angles,
    rotate_about_grasp_x,
    sample_camera_pose,
)

rng = np.random.default_rng(0)

print("== sampled camera poses (uniform in radius/azimuth/elevation) ==")
for _ in range(5):
    pose = sample_camera_pose(rng)
    ext = camera_extrinsics(pose)
    print(
        f"r={pose.radius:.2f}m polar={pose.polar:6.1f} elev={pose.elevation:5.1f} "
        f"-> camera at {np.round(camera_position(ext), 3)}"
    )

print("\n== spinning a top-down grasp about its contact axis ==")
rot = np.column_stack([[1, 0, 0], [0, -1, 0], [0, 0, -1]]).astype(float)
grasp = RigidTransform(UnitQuaternion.from_rotation_matrix(rot), [0, 0, 0.03])
cam = camera_extrinsics(SphericalCameraPose(0.7, 0.0, 45.0))
for omega in (0, 45, 90, 135, 180):
    spun = rotate_about_grasp_x(grasp, omega)
    angles = relative_angles(spun, cam)
    print(f"omega={omega:3d}: beta={angles.beta:6.1f}  psi={angles.psi:6.1f}")

print("\n== grasps that end up below the table get flipped ==")
under = rotate_about_grasp_x(grasp, 150.0)
print(f"before flip: beta={grasp_beta(under):.1f}")
print(f"after flip:  beta={grasp_beta(flip_if_below_table(under)):.1f}")
