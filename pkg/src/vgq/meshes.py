"""Triangle meshes: a minimal OBJ loader, procedural desk-scale primitives and
stable resting poses on the table plane."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.spatial import ConvexHull, QhullError

from .geometry import RigidTransform, UnitQuaternion


class MeshFormatError(ValueError):
    """Raised when an OBJ file cannot be parsed into a valid mesh."""


class TriangleMesh:
    """Indexed triangle mesh in meters.

    Degenerate (zero-area) triangles are dropped on construction and a
    watertightness flag is recorded (every undirected edge shared by exactly
    two triangles).
    """

    def __init__(self, vertices, triangles, object_id: str = "mesh"):
        vertices = np.asarray(vertices, dtype=float).reshape(-1, 3)
        triangles = np.asarray(triangles, dtype=np.int64).reshape(-1, 3)
        if len(vertices) == 0 or len(triangles) == 0:
            raise MeshFormatError("mesh has no geometry")
        if triangles.min() < 0 or triangles.max() >= len(vertices):
            raise MeshFormatError("triangle index out of range")
        areas = _triangle_areas(vertices, triangles)
        triangles = triangles[areas > 1e-14]
        if len(triangles) == 0:
            raise MeshFormatError("mesh has only degenerate triangles")
        self.vertices = vertices
        self.triangles = triangles
        self.object_id = object_id
        self.watertight = _is_watertight(triangles)
        self.centroid = vertices.mean(axis=0)

    def __repr__(self):
        return (
            f"TriangleMesh({self.object_id!r}, {len(self.vertices)} verts, "
            f"{len(self.triangles)} tris)"
        )

    def triangle_corners(self) -> np.ndarray:
        """Per-triangle corner coordinates, shape (n_tris, 3, 3)."""
        return self.vertices[self.triangles]

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    def surface_area(self) -> float:
        return float(_triangle_areas(self.vertices, self.triangles).sum())

    def max_radius_about(self, point) -> float:
        return float(np.linalg.norm(self.vertices - np.asarray(point), axis=1).max())

    def transformed(self, transform: RigidTransform, object_id: str | None = None) -> "TriangleMesh":
        return TriangleMesh(
            transform.transform_points(self.vertices),
            self.triangles,
            object_id if object_id is not None else self.object_id,
        )

    def contains(self, point) -> bool:
        """Convex-hull containment test (exact for convex meshes); planar
        meshes contain nothing."""
        hull = self._convex_hull()
        if hull is None:
            return False
        p = np.asarray(point, dtype=float)
        return bool(np.all(hull.equations[:, :3] @ p + hull.equations[:, 3] <= 1e-12))

    def _convex_hull(self) -> ConvexHull | None:
        if not hasattr(self, "_hull_cache"):
            try:
                self._hull_cache = ConvexHull(self.vertices)
            except QhullError:
                self._hull_cache = None
        return self._hull_cache


def _triangle_areas(vertices: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    corners = vertices[triangles]
    cross = np.cross(corners[:, 1] - corners[:, 0], corners[:, 2] - corners[:, 0])
    return 0.5 * np.linalg.norm(cross, axis=1)


def _is_watertight(triangles: np.ndarray) -> bool:
    edges = np.concatenate(
        [triangles[:, [0, 1]], triangles[:, [1, 2]], triangles[:, [2, 0]]]
    )
    edges = np.sort(edges, axis=1)
    _, counts = np.unique(edges, axis=0, return_counts=True)
    return bool(np.all(counts == 2))


def load_mesh(path) -> TriangleMesh:
    """Load an ASCII OBJ file (v/f records, 1-based indices; polygons are
    fan-triangulated). Unknown record types are ignored."""
    path = Path(path)
    vertices: list[list[float]] = []
    faces: list[tuple[int, int, int]] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            tag = parts[0]
            if tag == "v":
                if len(parts) < 4:
                    raise MeshFormatError(f"{path.name}: line {lineno}: vertex needs 3 coordinates")
                try:
                    vertices.append([float(parts[1]), float(parts[2]), float(parts[3])])
                except ValueError:
                    raise MeshFormatError(f"{path.name}: line {lineno}: bad vertex coordinate") from None
            elif tag == "f":
                if len(parts) < 4:
                    raise MeshFormatError(f"{path.name}: line {lineno}: face needs at least 3 vertices")
                idx = []
                for token in parts[1:]:
                    head = token.split("/")[0]
                    try:
                        i = int(head)
                    except ValueError:
                        raise MeshFormatError(f"{path.name}: line {lineno}: bad face index {token!r}") from None
                    if i <= 0:
                        raise MeshFormatError(f"{path.name}: line {lineno}: face indices must be positive")
                    idx.append(i - 1)
                for a, b in zip(idx[1:], idx[2:]):
                    faces.append((idx[0], a, b))
    if not vertices or not faces:
        raise MeshFormatError(f"{path.name}: no usable v/f records")
    verts = np.asarray(vertices)
    tris = np.asarray(faces, dtype=np.int64)
    if tris.max() >= len(verts):
        bad = int(np.argmax(tris.max(axis=1) >= len(verts)))
        raise MeshFormatError(
            f"{path.name}: face {bad + 1} references vertex {int(tris[bad].max()) + 1} "
            f"but only {len(verts)} vertices exist"
        )
    return TriangleMesh(verts, tris, object_id=path.stem)


def save_obj(mesh: TriangleMesh, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for v in mesh.vertices:
            fh.write(f"v {v[0]:.9g} {v[1]:.9g} {v[2]:.9g}\n")
        for t in mesh.triangles:
            fh.write(f"f {t[0] + 1} {t[1] + 1} {t[2] + 1}\n")


# ---------------------------------------------------------------------------
# procedural primitives


def make_box(extents, object_id: str = "box") -> TriangleMesh:
    ex, ey, ez = np.asarray(extents, dtype=float) / 2.0
    verts = np.array(
        [[sx * ex, sy * ey, sz * ez] for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)]
    )
    # outward-oriented faces of the +/- corners layout above
    quads = [
        (0, 1, 3, 2),  # -x
        (4, 6, 7, 5),  # +x
        (0, 4, 5, 1),  # -y
        (2, 3, 7, 6),  # +y
        (0, 2, 6, 4),  # -z
        (1, 5, 7, 3),  # +z
    ]
    tris = []
    for a, b, c, d in quads:
        tris.append((a, b, c))
        tris.append((a, c, d))
    return TriangleMesh(verts, tris, object_id)


def make_cylinder(radius: float, height: float, segments: int = 24, object_id: str = "cylinder") -> TriangleMesh:
    angles = np.linspace(0.0, 2.0 * math.pi, segments, endpoint=False)
    ring = np.stack([radius * np.cos(angles), radius * np.sin(angles)], axis=1)
    bottom = np.column_stack([ring, np.full(segments, -height / 2.0)])
    top = np.column_stack([ring, np.full(segments, height / 2.0)])
    verts = np.vstack([bottom, top, [[0, 0, -height / 2.0]], [[0, 0, height / 2.0]]])
    cb, ct = 2 * segments, 2 * segments + 1
    tris = []
    for i in range(segments):
        j = (i + 1) % segments
        tris.append((i, j, segments + j))
        tris.append((i, segments + j, segments + i))
        tris.append((cb, j, i))
        tris.append((ct, segments + i, segments + j))
    return TriangleMesh(verts, tris, object_id)


def make_sphere(radius: float, subdivisions: int = 2, object_id: str = "sphere") -> TriangleMesh:
    """Icosphere; subdivisions=2 gives 320 triangles."""
    phi = (1.0 + math.sqrt(5.0)) / 2.0
    verts = np.array(
        [
            [-1, phi, 0], [1, phi, 0], [-1, -phi, 0], [1, -phi, 0],
            [0, -1, phi], [0, 1, phi], [0, -1, -phi], [0, 1, -phi],
            [phi, 0, -1], [phi, 0, 1], [-phi, 0, -1], [-phi, 0, 1],
        ],
        dtype=float,
    )
    tris = [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ]
    verts = [v / np.linalg.norm(v) for v in verts]
    for _ in range(subdivisions):
        cache: dict[tuple[int, int], int] = {}
        new_tris = []

        def midpoint(a: int, b: int) -> int:
            key = (min(a, b), max(a, b))
            if key not in cache:
                m = verts[a] + verts[b]
                verts.append(m / np.linalg.norm(m))
                cache[key] = len(verts) - 1
            return cache[key]

        for a, b, c in tris:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new_tris += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        tris = new_tris
    return TriangleMesh(np.asarray(verts) * radius, tris, object_id)


def make_l_prism(leg: float, thickness: float, depth: float, object_id: str = "l_prism") -> TriangleMesh:
    """L-shaped cross-section in the xz-plane extruded along y."""
    profile = np.array(
        [
            [0.0, 0.0],
            [leg, 0.0],
            [leg, thickness],
            [thickness, thickness],
            [thickness, leg],
            [0.0, leg],
        ]
    )
    profile = profile - profile.mean(axis=0)
    n = len(profile)
    front = np.column_stack([profile[:, 0], np.full(n, depth / 2.0), profile[:, 1]])
    back = np.column_stack([profile[:, 0], np.full(n, -depth / 2.0), profile[:, 1]])
    verts = np.vstack([front, back])
    # front/back caps: fan from a reflex-safe split into two convex quads
    cap = [(0, 1, 2), (0, 2, 3), (0, 3, 5), (3, 4, 5)]
    tris = []
    for a, b, c in cap:
        tris.append((a, b, c))
        tris.append((n + a, n + c, n + b))
    for i in range(n):
        j = (i + 1) % n
        tris.append((i, n + i, n + j))
        tris.append((i, n + j, j))
    return TriangleMesh(verts, tris, object_id)


def generate_primitive_set(count: int = 24, seed: int = 0) -> list[TriangleMesh]:
    """Deterministic family of graspable desk-scale primitives."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x6D657368]))
    kinds = ["box", "box", "cylinder", "cylinder", "sphere", "l_prism"]
    meshes = []
    for i in range(count):
        kind = kinds[i % len(kinds)]
        if kind == "box":
            extents = rng.uniform([0.03, 0.03, 0.02], [0.07, 0.07, 0.06])
            meshes.append(make_box(extents, object_id=f"box_{i:03d}"))
        elif kind == "cylinder":
            r = rng.uniform(0.012, 0.03)
            h = rng.uniform(0.03, 0.08)
            meshes.append(make_cylinder(r, h, object_id=f"cylinder_{i:03d}"))
        elif kind == "sphere":
            r = rng.uniform(0.018, 0.034)
            meshes.append(make_sphere(r, object_id=f"sphere_{i:03d}"))
        else:
            leg = rng.uniform(0.04, 0.07)
            thickness = rng.uniform(0.012, 0.022)
            depth = rng.uniform(0.03, 0.06)
            meshes.append(make_l_prism(leg, thickness, depth, object_id=f"l_prism_{i:03d}"))
    return meshes


# ---------------------------------------------------------------------------
# stable resting poses


@dataclass(frozen=True)
class StablePose:
    """Mesh-to-world transform resting the object on z=0, with a quasi-static
    probability proportional to the supporting hull face's solid angle seen
    from the center of mass."""

    transform: RigidTransform
    probability: float


def compute_stable_poses(
    mesh: TriangleMesh,
    min_probability: float = 0.0,
    dedup_tol_deg: float = 0.5,
) -> list[StablePose]:
    """Enumerate resting poses of the convex hull on the table plane.

    A hull face supports a stable pose when the projection of the center of
    mass lands strictly inside its support polygon. Poses whose orientations
    differ only by a rotation about world z are merged (probabilities summed).
    Returns poses sorted by descending probability; empty for pathological
    meshes with no stable face.
    """
    hull = ConvexHull(mesh.vertices)
    com = _hull_volume_centroid(mesh.vertices, hull)
    faces = _merge_coplanar_facets(mesh.vertices, hull)

    candidates: list[tuple[UnitQuaternion, float, float]] = []  # (rot, z_off, weight)
    for normal, vert_idx in faces:
        poly = mesh.vertices[vert_idx]
        if not _projects_inside(com, normal, poly):
            continue
        weight = _solid_angle(poly, normal, com)
        if weight <= 0:
            continue
        rot = _rotation_taking(normal, np.array([0.0, 0.0, -1.0]))
        local = (mesh.vertices - com) @ rot.rotation_matrix().T
        z_off = -local[:, 2].min()
        candidates.append((rot, z_off, weight))

    if not candidates:
        return []

    merged: list[list] = []
    for rot, z_off, weight in candidates:
        matched = False
        for entry in merged:
            rel = rot * entry[0].inverse()
            # pure world-z rotations keep e_z fixed
            if abs(rel.rotation_matrix()[2, 2] - 1.0) < 1.0 - math.cos(math.radians(dedup_tol_deg)) + 1e-12:
                entry[2] += weight
                matched = True
                break
        if not matched:
            merged.append([rot, z_off, weight])

    total = sum(entry[2] for entry in merged)
    poses = []
    for rot, z_off, weight in merged:
        prob = weight / total
        if prob < min_probability:
            continue
        translation = -rot.rotate(com) + np.array([0.0, 0.0, z_off])
        poses.append(StablePose(RigidTransform(rot, translation), prob))
    norm = sum(p.probability for p in poses)
    poses = [StablePose(p.transform, p.probability / norm) for p in poses]
    poses.sort(key=lambda p: -p.probability)
    return poses


def _hull_volume_centroid(vertices: np.ndarray, hull: ConvexHull) -> np.ndarray:
    interior = vertices[hull.vertices].mean(axis=0)
    corners = vertices[hull.simplices]
    rel = corners - interior
    vols = np.abs(np.einsum("ij,ij->i", rel[:, 0], np.cross(rel[:, 1], rel[:, 2]))) / 6.0
    centroids = interior + rel.sum(axis=1) / 4.0
    return (centroids * vols[:, None]).sum(axis=0) / vols.sum()


def _merge_coplanar_facets(vertices: np.ndarray, hull: ConvexHull):
    """Group hull simplices sharing a plane; returns (normal, vertex index) pairs."""
    groups: list[tuple[np.ndarray, float, set]] = []
    for simplex, eq in zip(hull.simplices, hull.equations):
        normal, offset = eq[:3], eq[3]
        for g_normal, g_offset, g_verts in groups:
            if np.dot(normal, g_normal) > 1.0 - 1e-9 and abs(offset - g_offset) < 1e-9:
                g_verts.update(simplex.tolist())
                break
        else:
            groups.append((normal, offset, set(simplex.tolist())))
    return [(normal, np.array(sorted(verts))) for normal, _, verts in groups]


def _projects_inside(com: np.ndarray, normal: np.ndarray, poly: np.ndarray, margin: float = 1e-9) -> bool:
    """Is the com projection strictly inside the convex support polygon?"""
    u, v = _plane_basis(normal)
    pts2 = np.column_stack([poly @ u, poly @ v])
    p2 = np.array([com @ u, com @ v])
    hull2 = ConvexHull(pts2)
    return bool(np.all(hull2.equations[:, :2] @ p2 + hull2.equations[:, 2] < -margin))


def _plane_basis(normal: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    helper = np.array([1.0, 0.0, 0.0])
    if abs(normal[0]) > 0.9:
        helper = np.array([0.0, 1.0, 0.0])
    u = np.cross(normal, helper)
    u /= np.linalg.norm(u)
    return u, np.cross(normal, u)


def _solid_angle(poly: np.ndarray, normal: np.ndarray, origin: np.ndarray) -> float:
    """Solid angle subtended by a convex planar polygon, via triangle fan."""
    u, v = _plane_basis(normal)
    pts2 = np.column_stack([poly @ u, poly @ v])
    hull2 = ConvexHull(pts2)
    ring = poly[hull2.vertices]
    center = ring.mean(axis=0)
    total = 0.0
    for i in range(len(ring)):
        a = ring[i] - origin
        b = ring[(i + 1) % len(ring)] - origin
        c = center - origin
        total += _triangle_solid_angle(a, b, c)
    return abs(total)


def _triangle_solid_angle(a: np.ndarray, b: np.ndarray, c: np.ndarray) -> float:
    # Van Oosterom & Strackee
    la, lb, lc = np.linalg.norm(a), np.linalg.norm(b), np.linalg.norm(c)
    numerator = float(np.dot(a, np.cross(b, c)))
    denom = la * lb * lc + np.dot(a, b) * lc + np.dot(a, c) * lb + np.dot(b, c) * la
    return 2.0 * math.atan2(numerator, denom)


def _rotation_taking(src: np.ndarray, dst: np.ndarray) -> UnitQuaternion:
    """Minimal rotation taking unit vector src onto unit vector dst."""
    axis = np.cross(src, dst)
    n = np.linalg.norm(axis)
    dot = float(np.clip(np.dot(src, dst), -1.0, 1.0))
    if n < 1e-12:
        if dot > 0:
            return UnitQuaternion.identity()
        # opposite directions: rotate half turn about any perpendicular axis
        perp = np.cross(src, [1.0, 0.0, 0.0])
        if np.linalg.norm(perp) < 1e-9:
            perp = np.cross(src, [0.0, 1.0, 0.0])
        return UnitQuaternion.from_axis_angle(perp, 180.0)
    return UnitQuaternion.from_axis_angle(axis, math.degrees(math.atan2(n, dot)))
