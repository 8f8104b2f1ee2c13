"""Rigid-body math: unit quaternions, rigid transforms, spherical camera
placement and the relative angles between camera, table and gripper.

Angle convention used throughout the package: all public interfaces speak
degrees; radians appear only inside trig kernels. The gripper approach angle
``beta`` is measured against the downward direction (-world z), so a straight
top-down grasp has beta = 0. Camera elevation is measured up from the table
plane: elevation 0 puts the camera level with the table, 90 directly overhead
(out of range for the default sampling bounds).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

_EPS = 1e-12


class UnitQuaternion:
    """Unit quaternion (w, x, y, z) stored in canonical sign.

    The constructor normalizes and canonicalizes: w >= 0, and if w == 0 the
    first nonzero of (x, y, z) is positive. Hence q and -q construct the same
    representative. Instances are immutable values.
    """

    __slots__ = ("w", "x", "y", "z")

    def __init__(self, w: float, x: float, y: float, z: float):
        norm = math.sqrt(w * w + x * x + y * y + z * z)
        if norm < _EPS:
            raise ValueError("cannot normalize a zero quaternion")
        if abs(norm - 1.0) > 1e-13:  # keep already-unit components bit-exact
            w, x, y, z = w / norm, x / norm, y / norm, z / norm
        if w < 0 or (w == 0 and _first_nonzero_negative(x, y, z)):
            w, x, y, z = -w, -x, -y, -z
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "z", z)

    def __setattr__(self, name, value):
        raise AttributeError("UnitQuaternion is immutable")

    def __reduce__(self):
        return (UnitQuaternion, (self.w, self.x, self.y, self.z))

    def __repr__(self):
        return f"UnitQuaternion({self.w:.9g}, {self.x:.9g}, {self.y:.9g}, {self.z:.9g})"

    def __eq__(self, other):
        if not isinstance(other, UnitQuaternion):
            return NotImplemented
        return (self.w, self.x, self.y, self.z) == (other.w, other.x, other.y, other.z)

    def __hash__(self):
        return hash((self.w, self.x, self.y, self.z))

    @classmethod
    def identity(cls) -> "UnitQuaternion":
        return cls(1.0, 0.0, 0.0, 0.0)

    @classmethod
    def from_axis_angle(cls, axis, angle_deg: float) -> "UnitQuaternion":
        axis = np.asarray(axis, dtype=float)
        n = np.linalg.norm(axis)
        if n < _EPS:
            raise ValueError("rotation axis must be nonzero")
        half = math.radians(angle_deg) / 2.0
        s = math.sin(half) / n
        return cls(math.cos(half), axis[0] * s, axis[1] * s, axis[2] * s)

    @classmethod
    def from_rotation_matrix(cls, m) -> "UnitQuaternion":
        m = np.asarray(m, dtype=float)
        trace = m[0, 0] + m[1, 1] + m[2, 2]
        if trace > 0:
            s = 0.5 / math.sqrt(trace + 1.0)
            w = 0.25 / s
            x = (m[2, 1] - m[1, 2]) * s
            y = (m[0, 2] - m[2, 0]) * s
            z = (m[1, 0] - m[0, 1]) * s
        elif m[0, 0] > m[1, 1] and m[0, 0] > m[2, 2]:
            s = 2.0 * math.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2])
            w = (m[2, 1] - m[1, 2]) / s
            x = 0.25 * s
            y = (m[0, 1] + m[1, 0]) / s
            z = (m[0, 2] + m[2, 0]) / s
        elif m[1, 1] > m[2, 2]:
            s = 2.0 * math.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2])
            w = (m[0, 2] - m[2, 0]) / s
            x = (m[0, 1] + m[1, 0]) / s
            y = 0.25 * s
            z = (m[1, 2] + m[2, 1]) / s
        else:
            s = 2.0 * math.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1])
            w = (m[1, 0] - m[0, 1]) / s
            x = (m[0, 2] + m[2, 0]) / s
            y = (m[1, 2] + m[2, 1]) / s
            z = 0.25 * s
        return cls(w, x, y, z)

    def as_array(self) -> np.ndarray:
        return np.array([self.w, self.x, self.y, self.z])

    def rotation_matrix(self) -> np.ndarray:
        w, x, y, z = self.w, self.x, self.y, self.z
        return np.array(
            [
                [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
                [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
                [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
            ]
        )

    def __mul__(self, other: "UnitQuaternion") -> "UnitQuaternion":
        """Hamilton product self * other (apply other first, then self)."""
        w1, x1, y1, z1 = self.w, self.x, self.y, self.z
        w2, x2, y2, z2 = other.w, other.x, other.y, other.z
        return UnitQuaternion(
            w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
            w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
            w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
            w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
        )

    def inverse(self) -> "UnitQuaternion":
        return UnitQuaternion(self.w, -self.x, -self.y, -self.z)

    def rotate(self, v) -> np.ndarray:
        return self.rotation_matrix() @ np.asarray(v, dtype=float)

    def angle_to(self, other: "UnitQuaternion") -> float:
        """Smallest rotation angle in degrees taking self to other."""
        d = self.inverse() * other
        vec = math.sqrt(d.x * d.x + d.y * d.y + d.z * d.z)
        return math.degrees(2.0 * math.atan2(vec, abs(d.w)))


def _first_nonzero_negative(*components: float) -> bool:
    for c in components:
        if c != 0.0:
            return c < 0.0
    return False


class RigidTransform:
    """Rotation plus translation; composition via ``*``, points in meters."""

    __slots__ = ("rotation", "translation")

    def __init__(self, rotation: UnitQuaternion, translation):
        object.__setattr__(self, "rotation", rotation)
        t = np.asarray(translation, dtype=float).reshape(3).copy()
        t.setflags(write=False)
        object.__setattr__(self, "translation", t)

    def __setattr__(self, name, value):
        raise AttributeError("RigidTransform is immutable")

    def __reduce__(self):
        return (RigidTransform, (self.rotation, np.asarray(self.translation)))

    def __repr__(self):
        t = self.translation
        return f"RigidTransform({self.rotation!r}, [{t[0]:.6g}, {t[1]:.6g}, {t[2]:.6g}])"

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls(UnitQuaternion.identity(), np.zeros(3))

    @classmethod
    def from_matrix(cls, m) -> "RigidTransform":
        m = np.asarray(m, dtype=float)
        return cls(UnitQuaternion.from_rotation_matrix(m[:3, :3]), m[:3, 3])

    def as_matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation.rotation_matrix()
        m[:3, 3] = self.translation
        return m

    def __mul__(self, other: "RigidTransform") -> "RigidTransform":
        rotation = self.rotation * other.rotation
        translation = self.rotation.rotate(other.translation) + self.translation
        return RigidTransform(rotation, translation)

    def inverse(self) -> "RigidTransform":
        inv_rot = self.rotation.inverse()
        return RigidTransform(inv_rot, -inv_rot.rotate(self.translation))

    def transform_point(self, p) -> np.ndarray:
        return self.rotation.rotate(p) + self.translation

    def transform_points(self, pts) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        return pts @ self.rotation.rotation_matrix().T + self.translation

    def transform_direction(self, d) -> np.ndarray:
        return self.rotation.rotate(d)


@dataclass(frozen=True)
class CameraBounds:
    """Sampling ranges for the spherical camera placement (degrees, meters)."""

    r_min: float = 0.4
    r_max: float = 1.1
    polar_min: float = 0.0
    polar_max: float = 360.0
    elev_min: float = 0.0
    elev_max: float = 70.0

    def validate(self) -> None:
        if not 0 < self.r_min <= self.r_max:
            raise ValueError("camera radius bounds must satisfy 0 < r_min <= r_max")
        if not 0.0 <= self.polar_min <= self.polar_max <= 360.0:
            raise ValueError("polar bounds must lie in [0, 360]")
        if not 0.0 <= self.elev_min <= self.elev_max <= 90.0:
            raise ValueError("elevation bounds must lie in [0, 90]")


@dataclass(frozen=True)
class SphericalCameraPose:
    """Camera placement on a sphere around the world origin.

    radius in meters; polar is the azimuth in [0, 360) degrees; elevation is
    degrees above the table plane (90 = directly overhead).
    """

    radius: float
    polar: float
    elevation: float

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("camera radius must be positive")
        if not 0.0 <= self.elevation <= 90.0:
            raise ValueError("camera elevation must lie in [0, 90] degrees")

    def position(self) -> np.ndarray:
        el = math.radians(self.elevation)
        az = math.radians(self.polar)
        ce = math.cos(el)
        return self.radius * np.array([ce * math.cos(az), ce * math.sin(az), math.sin(el)])


@dataclass(frozen=True)
class GraspAngles:
    """Approach angle vs. the table normal (beta) and vs. the camera principal
    ray (psi), both in degrees."""

    beta: float
    psi: float


def camera_extrinsics(pose: SphericalCameraPose) -> RigidTransform:
    """World-to-camera transform for a spherical camera placement.

    The principal ray (+z of the camera) points at the world origin, the
    camera x-axis is kept parallel to the table plane and the frame is
    right-handed with +y looking down at the table. Directly overhead
    (elevation exactly 90) the parallel-to-table constraint is degenerate and
    the camera x-axis falls back to world +x.
    """
    position = pose.position()
    forward = -position / np.linalg.norm(position)
    world_z = np.array([0.0, 0.0, 1.0])
    x_cam = np.cross(forward, world_z)
    nx = np.linalg.norm(x_cam)
    if nx < 1e-9:
        x_cam = np.array([1.0, 0.0, 0.0])
    else:
        x_cam = x_cam / nx
    y_cam = np.cross(forward, x_cam)
    rot_world_to_cam = np.vstack([x_cam, y_cam, forward])
    q = UnitQuaternion.from_rotation_matrix(rot_world_to_cam)
    return RigidTransform(q, -rot_world_to_cam @ position)


def camera_forward(extrinsics: RigidTransform) -> np.ndarray:
    """Principal-ray direction of a world-to-camera transform, in world frame."""
    return extrinsics.rotation.rotation_matrix()[2]


def camera_position(extrinsics: RigidTransform) -> np.ndarray:
    """Camera origin in world frame of a world-to-camera transform."""
    return extrinsics.inverse().translation


def sample_camera_pose(rng: np.random.Generator, bounds: CameraBounds | None = None) -> SphericalCameraPose:
    """Draw a camera pose uniformly per coordinate within the bounds."""
    b = bounds if bounds is not None else CameraBounds()
    b.validate()
    return SphericalCameraPose(
        radius=rng.uniform(b.r_min, b.r_max),
        polar=rng.uniform(b.polar_min, b.polar_max) % 360.0,
        elevation=rng.uniform(b.elev_min, b.elev_max),
    )


def _angle_between(u, v) -> float:
    dot = float(np.dot(u, v) / (np.linalg.norm(u) * np.linalg.norm(v)))
    return math.degrees(math.acos(max(-1.0, min(1.0, dot))))


def relative_angles(grasp: RigidTransform, camera: RigidTransform) -> GraspAngles:
    """Beta/psi angles of a world-frame grasp against table normal and camera.

    beta is the angle between the gripper approach (+z of the grasp frame) and
    straight down, so beta = 0 is a top-down grasp; psi is the angle between
    the approach and the camera principal ray.
    """
    approach = grasp.rotation.rotation_matrix()[:, 2]
    beta = _angle_between(approach, np.array([0.0, 0.0, -1.0]))
    psi = _angle_between(approach, camera_forward(camera))
    return GraspAngles(beta=beta, psi=psi)


def grasp_beta(grasp: RigidTransform) -> float:
    """Angle in degrees between the grasp approach axis and straight down."""
    approach = grasp.rotation.rotation_matrix()[:, 2]
    return _angle_between(approach, np.array([0.0, 0.0, -1.0]))


def rotate_about_grasp_x(grasp: RigidTransform, omega_deg: float) -> RigidTransform:
    """Rotate a grasp about its own x-axis (the contact axis) by omega degrees.

    The contact axis and the grasp origin are both preserved; only the
    approach direction spins around the axis.
    """
    spin = UnitQuaternion.from_axis_angle([1.0, 0.0, 0.0], omega_deg)
    return RigidTransform(grasp.rotation * spin, grasp.translation)


def flip_if_below_table(grasp: RigidTransform) -> RigidTransform:
    """Flip grasps that approach from underneath (beta > 90) by a half turn
    about the contact axis; grasps at or below 90 degrees pass through."""
    if grasp_beta(grasp) > 90.0:
        return rotate_about_grasp_x(grasp, 180.0)
    return grasp
