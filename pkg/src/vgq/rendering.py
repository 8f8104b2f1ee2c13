"""Software pinhole depth rendering: z-buffer triangle rasterization over an
infinite table plane at z=0, plus TCP projection into pixel coordinates."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import RigidTransform, camera_position
from .meshes import TriangleMesh

# far clip: rays that miss the table plane (sky pixels at low camera
# elevations) or skim it at extreme range saturate here, keeping depth maps
# positive, bounded and NaN-free
DEFAULT_FAR_DEPTH = 2.0

_Z_BIAS = 1e-6
_NEAR = 1e-6


@dataclass(frozen=True)
class PinholeIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("principal point must lie inside the image")

    def scaled(self, factor: float) -> "PinholeIntrinsics":
        return PinholeIntrinsics(
            self.fx * factor,
            self.fy * factor,
            self.cx * factor,
            self.cy * factor,
            int(round(self.width * factor)),
            int(round(self.height * factor)),
        )


def default_intrinsics(size: int = 300) -> PinholeIntrinsics:
    """Kinect-like field of view rescaled to a square size x size image."""
    f = 525.0 * size / 640.0
    return PinholeIntrinsics(fx=f, fy=f, cx=size / 2.0, cy=size / 2.0, width=size, height=size)


class DepthImage:
    """Per-pixel camera-frame z depth plus the intrinsics/extrinsics that
    produced it. Background pixels carry the table-plane depth (or the far
    fallback where the ray misses the plane); every value is positive."""

    def __init__(self, data: np.ndarray, intrinsics: PinholeIntrinsics, camera_pose: RigidTransform):
        self.data = np.asarray(data, dtype=np.float32)
        self.intrinsics = intrinsics
        self.camera_pose = camera_pose

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape


def render_depth(
    mesh: TriangleMesh | None,
    mesh_to_world: RigidTransform | None,
    camera: RigidTransform,
    intrinsics: PinholeIntrinsics,
    far_depth: float = DEFAULT_FAR_DEPTH,
) -> DepthImage:
    """Rasterize the scene (object mesh on an infinite z=0 table) from a
    world-to-camera transform.

    mesh may be None for a table-only render; mesh_to_world of None means the
    mesh is already in world coordinates. Raises if the camera sits below the
    table or inside the object's convex hull.
    """
    cam_pos = camera_position(camera)
    if cam_pos[2] <= 0:
        raise ValueError("camera must be above the table plane")

    depth = _plane_depth(camera, intrinsics, cam_pos, far_depth)

    if mesh is not None:
        world_mesh = mesh if mesh_to_world is None else mesh.transformed(mesh_to_world)
        if world_mesh.contains(cam_pos):
            raise ValueError("camera is inside the object mesh")
        _rasterize(world_mesh, camera, intrinsics, depth)

    return DepthImage(depth.astype(np.float32), intrinsics, camera)


def _plane_depth(
    camera: RigidTransform,
    intr: PinholeIntrinsics,
    cam_pos: np.ndarray,
    far_depth: float,
) -> np.ndarray:
    cols = np.arange(intr.width) + 0.5
    rows = np.arange(intr.height) + 0.5
    u, v = np.meshgrid(cols, rows)
    # camera-frame ray with unit z component
    d_cam = np.stack([(u - intr.cx) / intr.fx, (v - intr.cy) / intr.fy, np.ones_like(u)], axis=-1)
    rot_c2w = camera.rotation.rotation_matrix().T
    d_world_z = d_cam @ rot_c2w[2]
    depth = np.full((intr.height, intr.width), far_depth, dtype=np.float64)
    hits = d_world_z < -1e-12
    depth[hits] = -cam_pos[2] / d_world_z[hits]
    # rays skimming the horizon meet the plane arbitrarily far away; clip to
    # the far fallback so depth stays bounded
    return np.minimum(depth, far_depth)


def _rasterize(
    mesh: TriangleMesh,
    camera: RigidTransform,
    intr: PinholeIntrinsics,
    depth: np.ndarray,
) -> None:
    verts_cam = camera.transform_points(mesh.vertices)
    z = verts_cam[:, 2]
    u = verts_cam[:, 0] / z * intr.fx + intr.cx
    v = verts_cam[:, 1] / z * intr.fy + intr.cy
    inv_z = 1.0 / z

    for tri in mesh.triangles:
        if np.any(z[tri] <= _NEAR):
            continue  # behind/through the camera; in-bounds cameras never hit this
        tu, tv, tw = u[tri], v[tri], inv_z[tri]
        col0 = max(int(np.floor(tu.min() - 0.5)), 0)
        col1 = min(int(np.ceil(tu.max() - 0.5)), intr.width - 1)
        row0 = max(int(np.floor(tv.min() - 0.5)), 0)
        row1 = min(int(np.ceil(tv.max() - 0.5)), intr.height - 1)
        if col0 > col1 or row0 > row1:
            continue
        area = (tu[1] - tu[0]) * (tv[2] - tv[0]) - (tu[2] - tu[0]) * (tv[1] - tv[0])
        if abs(area) < 1e-12:
            continue
        px = np.arange(col0, col1 + 1) + 0.5
        py = np.arange(row0, row1 + 1) + 0.5
        gx, gy = np.meshgrid(px, py)
        w0 = (tu[1] - gx) * (tv[2] - gy) - (tu[2] - gx) * (tv[1] - gy)
        w1 = (tu[2] - gx) * (tv[0] - gy) - (tu[0] - gx) * (tv[2] - gy)
        w2 = (tu[0] - gx) * (tv[1] - gy) - (tu[1] - gx) * (tv[0] - gy)
        inside = ((w0 >= 0) & (w1 >= 0) & (w2 >= 0)) | ((w0 <= 0) & (w1 <= 0) & (w2 <= 0))
        if not inside.any():
            continue
        l0, l1, l2 = w0 / area, w1 / area, w2 / area
        pixel_inv_z = l0 * tw[0] + l1 * tw[1] + l2 * tw[2]
        pixel_depth = np.where(pixel_inv_z > 0, 1.0 / np.maximum(pixel_inv_z, 1e-12), np.inf)
        window = depth[row0 : row1 + 1, col0 : col1 + 1]
        write = inside & (pixel_depth < window - _Z_BIAS)
        window[write] = pixel_depth[write]


def project_tcp(tcp, camera: RigidTransform, intrinsics: PinholeIntrinsics) -> tuple[float, float, float]:
    """Project a world-space point through the pinhole model.

    Returns continuous pixel coordinates (u, v) and the camera-frame depth z
    in meters; raises if the point is at or behind the camera plane.
    """
    p = camera.transform_point(tcp)
    if p[2] <= 0:
        raise ValueError("point is behind the camera")
    u = p[0] / p[2] * intrinsics.fx + intrinsics.cx
    v = p[1] / p[2] * intrinsics.fy + intrinsics.cy
    return float(u), float(v), float(p[2])


def back_project(u: float, v: float, z: float, camera: RigidTransform, intrinsics: PinholeIntrinsics) -> np.ndarray:
    """Inverse of project_tcp: pixel coordinates and depth to a world point."""
    x = (u - intrinsics.cx) / intrinsics.fx * z
    y = (v - intrinsics.cy) / intrinsics.fy * z
    return camera.inverse().transform_point(np.array([x, y, z]))
