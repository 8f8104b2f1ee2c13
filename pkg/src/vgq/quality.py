"""Ground-truth grasp labeling: antipodal grasp sampling on meshes, the
wrench-space epsilon quality metric with robustness sampling, and swept
gripper/table collision checking."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import ConvexHull, QhullError

from .geometry import RigidTransform, UnitQuaternion, grasp_beta, rotate_about_grasp_x
from .meshes import TriangleMesh

log = logging.getLogger(__name__)

# approach offsets (degrees about the contact axis) for the legacy-style
# multi-approach collision check; includes the nominal approach so the check
# accepts a superset of the strict single-approach variant
MULTI_APPROACH_OFFSETS_DEG = (0.0, -10.0, 5.0, 10.0)

# soft-finger torsional friction scale in meters (moment per unit normal
# force): two point contacts alone cannot resist torsion about the contact
# axis, so each contact contributes a +/- torsion wrench pair as well
DEFAULT_TORSION = 0.002


@dataclass(frozen=True)
class ParallelJawGrasp:
    """Parallel-jaw grasp: x-axis runs between the contacts, z-axis is the
    linear approach direction, tcp sits midway between the fingertips."""

    tcp: np.ndarray
    orientation: UnitQuaternion
    max_width: float = 0.08

    def __post_init__(self):
        object.__setattr__(self, "tcp", np.asarray(self.tcp, dtype=float).reshape(3))
        if self.max_width <= 0:
            raise ValueError("max_width must be positive")

    @property
    def pose(self) -> RigidTransform:
        return RigidTransform(self.orientation, self.tcp)

    @classmethod
    def from_pose(cls, pose: RigidTransform, max_width: float) -> "ParallelJawGrasp":
        return cls(pose.translation, pose.rotation, max_width)

    def contact_axis(self) -> np.ndarray:
        return self.orientation.rotation_matrix()[:, 0]

    def approach_axis(self) -> np.ndarray:
        return self.orientation.rotation_matrix()[:, 2]

    def transformed(self, transform: RigidTransform) -> "ParallelJawGrasp":
        return ParallelJawGrasp(
            transform.transform_point(self.tcp),
            transform.rotation * self.orientation,
            self.max_width,
        )

    def spun(self, omega_deg: float) -> "ParallelJawGrasp":
        return ParallelJawGrasp.from_pose(rotate_about_grasp_x(self.pose, omega_deg), self.max_width)


@dataclass(frozen=True)
class Contact:
    point: np.ndarray
    normal: np.ndarray  # unit, pointing into the object

    def __post_init__(self):
        object.__setattr__(self, "point", np.asarray(self.point, dtype=float).reshape(3))
        n = np.asarray(self.normal, dtype=float).reshape(3)
        object.__setattr__(self, "normal", n / np.linalg.norm(n))


@dataclass(frozen=True)
class ContactPair:
    p1: np.ndarray
    p2: np.ndarray
    n1: np.ndarray
    n2: np.ndarray

    def __post_init__(self):
        for name in ("p1", "p2"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float).reshape(3))
        for name in ("n1", "n2"):
            n = np.asarray(getattr(self, name), dtype=float).reshape(3)
            object.__setattr__(self, name, n / np.linalg.norm(n))

    @property
    def width(self) -> float:
        return float(np.linalg.norm(self.p2 - self.p1))

    @property
    def contacts(self) -> tuple[Contact, Contact]:
        return (Contact(self.p1, self.n1), Contact(self.p2, self.n2))


@dataclass(frozen=True)
class QualityLabel:
    rho: float
    collision_free: bool
    positive: bool


@dataclass(frozen=True)
class GripperModel:
    """Collision geometry: two finger cuboids whose inner faces sit at
    +/- max_width/2 along grasp x, and a palm block behind them along -z.
    The gripper is swept toward the grasp from approach_standoff away."""

    finger_length: float = 0.06
    finger_thickness: float = 0.01
    finger_depth: float = 0.015
    palm_depth: float = 0.02
    approach_standoff: float = 0.1
    sweep_step: float = 0.005

    def boxes(self, max_width: float) -> list[tuple[np.ndarray, np.ndarray]]:
        """(center, half_extents) of each cuboid in the grasp frame."""
        half_w = max_width / 2.0
        t, d, length = self.finger_thickness, self.finger_depth, self.finger_length
        finger_half = np.array([t / 2.0, d / 2.0, length / 2.0])
        left = np.array([-(half_w + t / 2.0), 0.0, -length / 2.0])
        right = np.array([half_w + t / 2.0, 0.0, -length / 2.0])
        palm_half = np.array([half_w + t, d / 2.0, self.palm_depth / 2.0])
        palm = np.array([0.0, 0.0, -length - self.palm_depth / 2.0])
        return [(left, finger_half), (right, finger_half), (palm, palm_half)]


@dataclass(frozen=True)
class QualityConfig:
    """Knobs of the ground-truth labeler."""

    friction: float = 0.6
    cone_edges: int = 8
    # torsional wrench magnitude in torque-normalized units: the metric's
    # upper bound for a solidly closed grasp, uniform across object sizes
    torsion: float = 0.03
    threshold: float = 0.027
    samples: int = 25
    sigma_translation: float = 0.0025  # meters
    sigma_rotation: float = 2.9  # degrees
    sigma_friction: float = 0.1
    gripper: GripperModel = field(default_factory=GripperModel)


# ---------------------------------------------------------------------------
# ray casting


def ray_mesh_hits(mesh: TriangleMesh, origin, direction) -> tuple[np.ndarray, np.ndarray]:
    """All ray/triangle intersections (Moller-Trumbore, both windings).

    Returns (t values ascending, triangle indices); t is in units of the
    direction vector's length.
    """
    origin = np.asarray(origin, dtype=float)
    direction = np.asarray(direction, dtype=float)
    corners = mesh.triangle_corners()
    v0 = corners[:, 0]
    e1 = corners[:, 1] - v0
    e2 = corners[:, 2] - v0
    pvec = np.cross(direction, e2)
    det = np.einsum("ij,ij->i", e1, pvec)
    ok = np.abs(det) > 1e-14
    inv_det = np.where(ok, 1.0 / np.where(ok, det, 1.0), 0.0)
    tvec = origin - v0
    u = np.einsum("ij,ij->i", tvec, pvec) * inv_det
    qvec = np.cross(tvec, e1)
    v = np.einsum("j,ij->i", direction, qvec) * inv_det
    t = np.einsum("ij,ij->i", e2, qvec) * inv_det
    eps = 1e-10
    hits = ok & (u >= -eps) & (v >= -eps) & (u + v <= 1.0 + eps) & (t > 1e-9)
    idx = np.nonzero(hits)[0]
    order = np.argsort(t[idx], kind="stable")
    ts, tris = t[idx][order], idx[order]
    if len(ts) > 1:
        # rays through shared edges/vertices report every incident triangle;
        # keep one hit per geometric crossing
        keep = np.concatenate([[True], np.diff(ts) > 1e-9])
        ts, tris = ts[keep], tris[keep]
    return ts, tris


def _triangle_inward_normal(mesh: TriangleMesh, tri_index: int, ray_direction: np.ndarray) -> np.ndarray:
    a, b, c = mesh.vertices[mesh.triangles[tri_index]]
    n = np.cross(b - a, c - a)
    n /= np.linalg.norm(n)
    # inward means along the entering ray
    return n if np.dot(n, ray_direction) > 0 else -n


# ---------------------------------------------------------------------------
# contacts and antipodal sampling


def contact_points(mesh: TriangleMesh, grasp: ParallelJawGrasp) -> ContactPair | None:
    """Close the fingers along the contact axis via two inward ray casts.

    Fingertips start at tcp +/- max_width/2 along grasp x and move toward the
    tcp; the first surface each ray meets is its contact. Returns None when
    either ray misses.
    """
    axis = grasp.contact_axis()
    half = grasp.max_width / 2.0
    tip_plus = grasp.tcp + half * axis
    tip_minus = grasp.tcp - half * axis

    t1, idx1 = ray_mesh_hits(mesh, tip_minus, axis)
    keep = t1 <= grasp.max_width + 1e-9
    t1, idx1 = t1[keep], idx1[keep]
    if len(t1) == 0:
        return None
    p1 = tip_minus + t1[0] * axis
    n1 = _triangle_inward_normal(mesh, idx1[0], axis)

    t2, idx2 = ray_mesh_hits(mesh, tip_plus, -axis)
    keep = t2 <= grasp.max_width + 1e-9
    t2, idx2 = t2[keep], idx2[keep]
    if len(t2) == 0:
        return None
    p2 = tip_plus - t2[0] * axis
    n2 = _triangle_inward_normal(mesh, idx2[0], -axis)

    if np.dot(p2 - p1, axis) < 1e-9:
        return None  # fingers crossed: no graspable slab between the hits
    return ContactPair(p1, p2, n1, n2)


def _sample_surface_point(mesh: TriangleMesh, rng: np.random.Generator) -> tuple[np.ndarray, int]:
    corners = mesh.triangle_corners()
    areas = 0.5 * np.linalg.norm(
        np.cross(corners[:, 1] - corners[:, 0], corners[:, 2] - corners[:, 0]), axis=1
    )
    tri = int(rng.choice(len(areas), p=areas / areas.sum()))
    r1, r2 = rng.random(), rng.random()
    s1 = math.sqrt(r1)
    a, b, c = corners[tri]
    return (1 - s1) * a + s1 * (1 - r2) * b + s1 * r2 * c, tri


def _uniform_cone_direction(axis: np.ndarray, half_angle_rad: float, rng: np.random.Generator) -> np.ndarray:
    """Uniform direction within a cone about axis."""
    cos_max = math.cos(half_angle_rad)
    cos_t = 1.0 - rng.random() * (1.0 - cos_max)
    sin_t = math.sqrt(max(0.0, 1.0 - cos_t * cos_t))
    phi = rng.random() * 2.0 * math.pi
    t1, t2 = _tangent_basis(axis)
    return cos_t * axis + sin_t * (math.cos(phi) * t1 + math.sin(phi) * t2)


def _tangent_basis(axis: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    helper = np.array([1.0, 0.0, 0.0]) if abs(axis[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    t1 = np.cross(axis, helper)
    t1 /= np.linalg.norm(t1)
    return t1, np.cross(axis, t1)


def _grasp_from_axis(tcp: np.ndarray, axis: np.ndarray, max_width: float) -> ParallelJawGrasp:
    """Build a grasp frame with the given contact axis and the most top-down
    approach available (z chosen closest to straight down, perpendicular to x)."""
    x = axis / np.linalg.norm(axis)
    down = np.array([0.0, 0.0, -1.0])
    z = down - np.dot(down, x) * x
    nz = np.linalg.norm(z)
    if nz < 1e-9:
        z = np.array([1.0, 0.0, 0.0]) - x[0] * x
        nz = np.linalg.norm(z)
    z /= nz
    y = np.cross(z, x)
    rot = np.column_stack([x, y, z])
    return ParallelJawGrasp(tcp, UnitQuaternion.from_rotation_matrix(rot), max_width)


def sample_antipodal(
    mesh: TriangleMesh,
    friction: float,
    count: int,
    rng: np.random.Generator,
    max_width: float = 0.08,
    max_attempts: int | None = None,
) -> list[ParallelJawGrasp]:
    """Rejection-sample antipodal parallel-jaw grasps on the mesh surface.

    Surface points are drawn area-weighted; a closing direction is drawn in
    the friction cone of the first contact and kept only if the opposite
    contact also satisfies the cone test and the contact span fits the jaw
    width. Grasps start with the most top-down approach; callers randomize
    the spin about the contact axis afterwards. Logs a warning and returns a
    short list when the attempt budget runs out.
    """
    if friction < 0:
        raise ValueError("friction must be non-negative")
    cone_half = math.atan(friction)
    attempts = max_attempts if max_attempts is not None else max(200, count * 200)
    grasps: list[ParallelJawGrasp] = []
    for _ in range(attempts):
        if len(grasps) >= count:
            break
        p1, tri = _sample_surface_point(mesh, rng)
        # inward normal at the sampled point
        a, b, c = mesh.vertices[mesh.triangles[tri]]
        n_out = np.cross(b - a, c - a)
        n_out /= np.linalg.norm(n_out)
        interior_dir = mesh.centroid - p1
        n_in = n_out if np.dot(n_out, interior_dir) > 0 else -n_out
        direction = (
            n_in if friction == 0 else _uniform_cone_direction(n_in, cone_half, rng)
        )
        ts, idxs = ray_mesh_hits(mesh, p1 + 1e-7 * direction, direction)
        ts = ts + 1e-7
        keep = ts <= max_width
        ts, idxs = ts[keep], idxs[keep]
        if len(ts) == 0:
            continue
        # farthest surface along the closing line: what the opposite finger meets
        p2 = p1 + ts[-1] * direction
        n2_in = _triangle_inward_normal(mesh, idxs[-1], -direction)
        # cone tests for both contacts against the closing axis
        if _angle(direction, n_in) > cone_half + 1e-9:
            continue
        if _angle(-direction, n2_in) > cone_half + 1e-9:
            continue
        tcp = (p1 + p2) / 2.0
        grasp = _grasp_from_axis(tcp, p2 - p1, max_width)
        if contact_points(mesh, grasp) is None:
            continue
        grasps.append(grasp)
    if len(grasps) < count:
        log.warning(
            "antipodal sampler found %d of %d requested grasps on %s",
            len(grasps),
            count,
            mesh.object_id,
        )
    return grasps


def _angle(u: np.ndarray, v: np.ndarray) -> float:
    dot = float(np.dot(u, v) / (np.linalg.norm(u) * np.linalg.norm(v)))
    return math.acos(max(-1.0, min(1.0, dot)))


# ---------------------------------------------------------------------------
# wrench-space quality


def wrench_set(
    contacts,
    friction: float,
    cone_edges: int,
    torque_scale: float,
    origin=None,
    torsion: float = DEFAULT_TORSION,
) -> np.ndarray:
    """Discretized 6-D wrench set of a soft-finger contact configuration.

    Each friction cone becomes cone_edges forces of unit normal component
    (n + mu * tangent) plus a pair of pure torsion wrenches about the contact
    normal; torques are taken about origin (default: contact centroid) and
    scaled by torque_scale.
    """
    contacts = _as_contacts(contacts)
    pts = np.array([c.point for c in contacts])
    ref = pts.mean(axis=0) if origin is None else np.asarray(origin, dtype=float)
    wrenches = []
    zero = np.zeros(3)
    for c in contacts:
        t1, t2 = _tangent_basis(c.normal)
        for k in range(cone_edges):
            phi = 2.0 * math.pi * k / cone_edges
            f = c.normal + friction * (math.cos(phi) * t1 + math.sin(phi) * t2)
            tau = torque_scale * np.cross(c.point - ref, f)
            wrenches.append(np.concatenate([f, tau]))
        if torsion > 0:
            spin = torque_scale * torsion * c.normal
            wrenches.append(np.concatenate([zero, spin]))
            wrenches.append(np.concatenate([zero, -spin]))
    return np.array(wrenches)


def ferrari_canny_epsilon(
    contacts,
    friction: float,
    cone_edges: int = 8,
    torque_scale: float = 1.0,
    origin=None,
    torsion: float = DEFAULT_TORSION,
) -> float:
    """Largest wrench-ball radius the contact set can resist.

    Computed as the distance from the wrench-space origin to the boundary of
    the convex hull of the discretized wrench set; 0 whenever the origin is
    not strictly interior (including rank-deficient hulls).
    """
    if cone_edges < 4:
        raise ValueError("cone discretization needs at least 4 edges")
    contacts = _as_contacts(contacts)
    if len(contacts) < 2:
        return 0.0
    w = wrench_set(contacts, friction, cone_edges, torque_scale, origin, torsion)
    try:
        hull = ConvexHull(w)
    except QhullError:
        return 0.0  # degenerate wrench set, origin cannot be interior
    offsets = hull.equations[:, -1]
    if np.any(offsets >= -1e-12):
        return 0.0
    return float(-offsets.max())


def _as_contacts(contacts) -> list[Contact]:
    if isinstance(contacts, ContactPair):
        return list(contacts.contacts)
    return list(contacts)


def default_torque_scale(mesh: TriangleMesh, about) -> float:
    """1 / (max vertex distance about a reference point)."""
    return 1.0 / max(mesh.max_radius_about(about), 1e-9)


def robust_quality(
    mesh: TriangleMesh,
    grasp: ParallelJawGrasp,
    cfg: QualityConfig,
    rng: np.random.Generator,
) -> float:
    """Mean wrench-space quality under grasp-pose and friction jitter.

    Draws cfg.samples perturbed copies of the grasp (Gaussian tcp jitter,
    axis-angle orientation jitter, friction jitter), recomputes contacts for
    each and averages the epsilon metric; perturbed grasps that lose contact
    contribute zero. With all sigmas zero and one sample this reduces to the
    deterministic metric.
    """
    if cfg.samples < 1:
        raise ValueError("need at least one robustness sample")
    total = 0.0
    for _ in range(cfg.samples):
        g = _perturb_grasp(grasp, cfg, rng)
        mu = max(0.0, cfg.friction + (cfg.sigma_friction * rng.standard_normal() if cfg.sigma_friction > 0 else 0.0))
        pair = contact_points(mesh, g)
        if pair is None:
            continue
        scale = default_torque_scale(mesh, g.tcp)
        # cfg.torsion is torque-normalized; undo the scale so every object
        # sees the same torsional ceiling
        total += ferrari_canny_epsilon(
            pair, mu, cfg.cone_edges, scale, origin=g.tcp, torsion=cfg.torsion / scale
        )
    return total / cfg.samples


def _perturb_grasp(grasp: ParallelJawGrasp, cfg: QualityConfig, rng: np.random.Generator) -> ParallelJawGrasp:
    if cfg.sigma_translation == 0 and cfg.sigma_rotation == 0:
        return grasp
    tcp = grasp.tcp + cfg.sigma_translation * rng.standard_normal(3)
    orientation = grasp.orientation
    if cfg.sigma_rotation > 0:
        axis = rng.standard_normal(3)
        while np.linalg.norm(axis) < 1e-9:
            axis = rng.standard_normal(3)
        angle = cfg.sigma_rotation * rng.standard_normal()
        orientation = UnitQuaternion.from_axis_angle(axis, angle) * orientation
    return ParallelJawGrasp(tcp, orientation, grasp.max_width)


def quality_label(
    mesh_world: TriangleMesh,
    grasp_world: ParallelJawGrasp,
    rho_if_free: float,
    cfg: QualityConfig,
) -> QualityLabel:
    """Label a world-frame grasp: zero quality on any gripper/table collision."""
    collides = check_collision(mesh_world, grasp_world, cfg.gripper)
    rho = 0.0 if collides else rho_if_free
    return QualityLabel(rho=rho, collision_free=not collides, positive=rho > cfg.threshold)


# ---------------------------------------------------------------------------
# collision checking


def check_collision(
    mesh: TriangleMesh,
    grasp: ParallelJawGrasp,
    gripper: GripperModel,
    approach_offsets_deg=None,
) -> bool:
    """True when the gripper collides while approaching the grasp pose.

    The open gripper starts approach_standoff behind the grasp along its own
    -z and advances to the final pose in sweep_step increments; a collision is
    any step where a gripper box meets the mesh or dips below the table plane.
    approach_offsets_deg, when given, tests several spins about the contact
    axis and reports a collision only if every one of them collides (the
    legacy-style multi-approach check).
    """
    if approach_offsets_deg is None:
        return _swept_collision(mesh, grasp, gripper)
    return all(_swept_collision(mesh, grasp.spun(o), gripper) for o in approach_offsets_deg)


def _swept_collision(mesh: TriangleMesh, grasp: ParallelJawGrasp, gripper: GripperModel) -> bool:
    rot = grasp.orientation.rotation_matrix()
    n_steps = max(1, int(math.ceil(gripper.approach_standoff / gripper.sweep_step)))
    steps = np.linspace(-gripper.approach_standoff, 0.0, n_steps + 1)

    # mesh triangles once in the grasp frame; the gripper offset s along its
    # own z then enters every separating-axis test linearly
    tris_g = (mesh.triangle_corners() - grasp.tcp) @ rot
    approach_world_z = rot[2, 2]  # world-z component of the grasp z-axis

    for center, half in gripper.boxes(grasp.max_width):
        if _box_table_interval_hit(grasp.tcp, rot, center, half, approach_world_z, steps):
            return True
        if _box_mesh_interval_hit(tris_g, center, half, steps):
            return True
    return False


def _box_table_interval_hit(
    tcp: np.ndarray,
    rot: np.ndarray,
    center: np.ndarray,
    half: np.ndarray,
    slope: float,
    steps: np.ndarray,
) -> bool:
    """Does any step put a box corner below z=0?"""
    signs = np.array([[sx, sy, sz] for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)], dtype=float)
    corners = center + signs * half
    world_z0 = tcp[2] + corners @ rot[2]
    z_min = world_z0.min()
    return bool(np.any(z_min + steps * slope < 0.0))


def _box_mesh_interval_hit(tris_g: np.ndarray, center: np.ndarray, half: np.ndarray, steps: np.ndarray) -> bool:
    """Separating-axis box/triangle test vectorized over triangles and steps.

    For each candidate axis the box/triangle overlap condition is linear in
    the approach offset s, so each axis yields an s-interval per triangle; a
    triangle is hit at the steps inside the intersection of its intervals.
    """
    m = len(tris_g)
    if m == 0:
        return False
    lo = np.full(m, -np.inf)
    hi = np.full(m, np.inf)

    def apply_axis(axes: np.ndarray):
        # axes: (m, 3) candidate separating axes (unnormalized)
        nonlocal lo, hi
        r = np.abs(axes) @ half  # box projection radius
        proj = np.einsum("mkj,mj->mk", tris_g, axes)  # triangle vertex projections
        tmin = proj.min(axis=1)
        tmax = proj.max(axis=1)
        c = axes @ center
        az = axes[:, 2]
        lower = tmin - r - c
        upper = tmax + r - c
        flat = np.abs(az) < 1e-12
        # s-independent axes: either always overlapping or a full separator
        separated = flat & ((c < tmin - r) | (c > tmax + r))
        lo = np.where(separated, np.inf, lo)
        with np.errstate(divide="ignore", invalid="ignore"):
            a = lower / az
            b = upper / az
        a_lo = np.where(az > 0, a, b)
        a_hi = np.where(az > 0, b, a)
        usable = ~flat
        lo = np.where(usable, np.maximum(lo, a_lo), lo)
        hi = np.where(usable, np.minimum(hi, a_hi), hi)

    eye = np.eye(3)
    for i in range(3):
        apply_axis(np.broadcast_to(eye[i], (m, 3)))
    edges = [tris_g[:, 1] - tris_g[:, 0], tris_g[:, 2] - tris_g[:, 1], tris_g[:, 0] - tris_g[:, 2]]
    normals = np.cross(edges[0], edges[1])
    apply_axis(normals)
    for i in range(3):
        for e in edges:
            axes = np.cross(np.broadcast_to(eye[i], (m, 3)), e)
            # zero axes (edge parallel to the box axis) impose no constraint
            degenerate = np.linalg.norm(axes, axis=1) < 1e-12
            axes = np.where(degenerate[:, None], 0.0, axes)
            apply_axis(axes)

    valid = lo <= hi
    if not np.any(valid):
        return False
    s0, s1, ds = steps[0], steps[-1], steps[1] - steps[0] if len(steps) > 1 else 1.0
    lo_v = np.maximum(lo[valid], s0)
    hi_v = np.minimum(hi[valid], s1)
    ok = lo_v <= hi_v
    if not np.any(ok):
        return False
    # does a sampled step land inside [lo, hi]?
    k_lo = np.ceil((lo_v[ok] - s0) / ds - 1e-9)
    k_hi = np.floor((hi_v[ok] - s0) / ds + 1e-9)
    return bool(np.any(k_lo <= k_hi))
