"""Dataset rendering and sampling: turn meshes into labeled grasp records over
randomized camera poses, then filter / rebalance / split them.

Pipeline order is fixed: render -> filter_psi -> balance_positivity ->
uniform_bin_undersample -> split_objects.
"""

from __future__ import annotations

import json
import logging
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .cropping import CropConfig
from .fileio import ShardFormatError, read_tensor, write_tensor
from .geometry import (
    CameraBounds,
    UnitQuaternion,
    camera_extrinsics,
    flip_if_below_table,
    relative_angles,
    sample_camera_pose,
)
from .meshes import TriangleMesh, compute_stable_poses
from .quality import (
    ParallelJawGrasp,
    QualityConfig,
    check_collision,
    robust_quality,
    sample_antipodal,
)
from .rendering import PinholeIntrinsics, default_intrinsics, render_depth
from .seeding import substream

log = logging.getLogger(__name__)

SHARD_MAGIC = b"VGQ1"
SHARD_VERSION = 1


@dataclass
class GraspRecord:
    """One training datapoint: a grasp seen in one rendered image.

    u, v are the TCP projection's offset from the image center, expressed in
    final-crop output pixels; z is the camera-frame TCP depth in meters; q is
    the gripper orientation in the camera frame. beta/psi and the camera
    placement are kept for filtering, balancing and reporting.
    """

    image_id: int
    u: float
    v: float
    z: float
    q: UnitQuaternion
    beta: float
    psi: float
    cam_r: float
    cam_polar: float
    cam_elev: float
    rho: float
    positive: bool
    object_id: str
    stable_pose_id: str

    def to_json(self) -> str:
        d = {
            "image_id": self.image_id,
            "u": self.u,
            "v": self.v,
            "z": self.z,
            "q": [self.q.w, self.q.x, self.q.y, self.q.z],
            "beta": self.beta,
            "psi": self.psi,
            "cam_r": self.cam_r,
            "cam_polar": self.cam_polar,
            "cam_elev": self.cam_elev,
            "rho": self.rho,
            "positive": self.positive,
            "object_id": self.object_id,
            "stable_pose_id": self.stable_pose_id,
        }
        return json.dumps(d, separators=(",", ":"))

    @classmethod
    def from_json(cls, line: str) -> "GraspRecord":
        d = json.loads(line)
        q = d.pop("q")
        return cls(q=UnitQuaternion(*q), **d)


@dataclass
class RenderShard:
    """Depth images for one object plus every grasp record referencing them."""

    images: np.ndarray  # (n_images, H, W) float32
    records: list[GraspRecord]
    meta: dict

    def __post_init__(self):
        for r in self.records:
            if not 0 <= r.image_id < len(self.images):
                raise ValueError(f"record image_id {r.image_id} outside shard")


@dataclass(frozen=True)
class BalanceConfig:
    """Undersampling targets (percent / degrees)."""

    target_pos_rate: float = 19.0
    beta_bin: float = 5.0
    elev_bin: float = 5.0
    psi_max: float = 90.0
    beta_max: float = 90.0
    elev_max: float = 70.0
    zero_pos_floor: int = 10

    def __post_init__(self):
        if not 0 < self.target_pos_rate < 100:
            raise ValueError("target positivity rate must be in (0, 100) percent")
        if self.beta_bin <= 0 or self.elev_bin <= 0:
            raise ValueError("bin widths must be positive")


@dataclass(frozen=True)
class RenderConfig:
    """Scope of the rendering stage (desk-scale defaults)."""

    cameras_per_pose: int = 20
    grasps_per_object: int = 200
    max_stable_poses: int = 4
    min_stable_pose_probability: float = 0.02
    image_size: int = 300
    max_width: float = 0.08
    bounds: CameraBounds = field(default_factory=CameraBounds)
    quality: QualityConfig = field(default_factory=QualityConfig)
    crop: CropConfig = field(default_factory=CropConfig)

    def intrinsics(self) -> PinholeIntrinsics:
        return default_intrinsics(self.image_size)


@dataclass
class SplitManifest:
    train: list[str]
    val: list[str]
    test: list[str]
    fractions: tuple[float, float, float] = (0.8, 0.1, 0.1)

    def to_dict(self) -> dict:
        return {
            "train": list(self.train),
            "val": list(self.val),
            "test": list(self.test),
            "fractions": list(self.fractions),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SplitManifest":
        return cls(d["train"], d["val"], d["test"], tuple(d["fractions"]))

    def split_of(self, object_id: str) -> str:
        for name in ("train", "val", "test"):
            if object_id in getattr(self, name):
                return name
        raise KeyError(object_id)


# ---------------------------------------------------------------------------
# rendering stage


def render_object_shard(mesh: TriangleMesh, config: RenderConfig, seed: int) -> RenderShard:
    """Render every (stable pose, camera) scene of one object and label all of
    its grasps in each; the per-object work item of render_dataset.

    The robustness quality of each grasp is computed once in the mesh frame
    (spinning the grasp about its contact axis leaves the contacts, and hence
    the pre-collision quality, unchanged); per scene only the collision check
    and the projection are re-evaluated.
    """
    intr = config.intrinsics()
    gripper = config.quality.gripper
    oid = mesh.object_id

    grasps = sample_antipodal(
        mesh,
        config.quality.friction,
        config.grasps_per_object,
        substream(seed, "grasps", oid),
        max_width=config.max_width,
    )
    rho_free = [
        robust_quality(mesh, g, config.quality, substream(seed, "rho", oid, i))
        for i, g in enumerate(grasps)
    ]

    poses = compute_stable_poses(mesh, min_probability=config.min_stable_pose_probability)
    if not poses:
        # near-isotropic shapes (spheres) have many tiny-probability poses
        poses = compute_stable_poses(mesh)
    poses = poses[: config.max_stable_poses]

    images: list[np.ndarray] = []
    records: list[GraspRecord] = []
    dropped = 0
    scale = config.crop.scale
    for pose_idx, stable in enumerate(poses):
        pose_id = f"s{pose_idx:02d}"
        mesh_w = mesh.transformed(stable.transform)
        grasps_w = [g.transformed(stable.transform) for g in grasps]
        for cam_idx in range(config.cameras_per_pose):
            rng = substream(seed, "camera", oid, pose_idx, cam_idx)
            cam_pose = sample_camera_pose(rng, config.bounds)
            extr = camera_extrinsics(cam_pose)
            depth = render_depth(mesh_w, None, extr, intr)
            image_id = len(images)
            images.append(depth.data)
            rot_wc = extr.rotation
            for g_idx, grasp in enumerate(grasps_w):
                omega = rng.uniform(0.0, 360.0)
                g = grasp.spun(omega)
                g = ParallelJawGrasp.from_pose(flip_if_below_table(g.pose), g.max_width)
                angles = relative_angles(g.pose, extr)
                collides = check_collision(mesh_w, g, gripper)
                rho = 0.0 if collides else rho_free[g_idx]
                p_cam = extr.transform_point(g.tcp)
                u_px = p_cam[0] / p_cam[2] * intr.fx + intr.cx
                v_px = p_cam[1] / p_cam[2] * intr.fy + intr.cy
                if not (0.0 <= u_px < intr.width and 0.0 <= v_px < intr.height):
                    dropped += 1
                    continue
                records.append(
                    GraspRecord(
                        image_id=image_id,
                        u=float((u_px - intr.width / 2.0) / scale),
                        v=float((v_px - intr.height / 2.0) / scale),
                        z=float(p_cam[2]),
                        q=rot_wc * g.orientation,
                        beta=angles.beta,
                        psi=angles.psi,
                        cam_r=cam_pose.radius,
                        cam_polar=cam_pose.polar,
                        cam_elev=cam_pose.elevation,
                        rho=rho,
                        positive=rho > config.quality.threshold,
                        object_id=oid,
                        stable_pose_id=pose_id,
                    )
                )
    meta = {
        "object_id": oid,
        "n_images": len(images),
        "n_records": len(records),
        "n_grasps": len(grasps),
        "n_stable_poses": len(poses),
        "n_dropped_offimage": dropped,
        "seed": seed,
    }
    if images:
        arr = np.stack(images).astype(np.float32)
    else:
        log.warning("object %s produced no renderable scene", oid)
        arr = np.zeros((0, intr.height, intr.width), dtype=np.float32)
    return RenderShard(images=arr, records=records, meta=meta)


def render_dataset(
    meshes,
    config: RenderConfig,
    seed: int,
    workers: int = 1,
) -> list[RenderShard]:
    """Render one shard per object; deterministic for a given seed regardless
    of worker count (every work item derives its own named substream)."""
    meshes = list(meshes)
    if workers <= 1:
        return [render_object_shard(m, config, seed) for m in meshes]
    from concurrent.futures import ThreadPoolExecutor

    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda m: render_object_shard(m, config, seed), meshes))


# ---------------------------------------------------------------------------
# sampling stages


def filter_psi(records, psi_max: float = 90.0) -> list[GraspRecord]:
    """Drop grasps approaching from behind the camera (psi >= psi_max)."""
    return [r for r in records if r.psi < psi_max]


def sample_rates(pos_rate_percent: float, target_percent: float = 19.0) -> tuple[float, float]:
    """Undersampling probabilities (negatives, positives) for one beta bin.

    The negative rate follows the closed form
    ((100/target) * p - p) / (100 - p) with p the bin's positivity rate in
    percent; the positive rate is its reciprocal; both clamp to 1.
    """
    p = pos_rate_percent
    if p <= 0.0:
        return 0.0, 1.0
    if p >= 100.0:
        return 1.0, 1.0
    raw_neg = ((100.0 / target_percent) * p - p) / (100.0 - p)
    rate_neg = min(1.0, raw_neg)
    rate_pos = min(1.0, 1.0 / raw_neg) if raw_neg > 0 else 1.0
    return rate_neg, rate_pos


def _bin_index(value: float, width: float, max_value: float) -> int:
    n_bins = int(math.ceil(max_value / width))
    return min(int(value // width), n_bins - 1)


def balance_positivity(records, cfg: BalanceConfig, rng: np.random.Generator) -> list[GraspRecord]:
    """Per-beta-bin undersampling toward the target positivity rate.

    Negatives are kept with the bin's negative rate and positives with the
    positive rate; bins without a single positive keep a small floor of
    negatives instead of emptying out.
    """
    bins: dict[int, list[int]] = {}
    for i, r in enumerate(records):
        bins.setdefault(_bin_index(r.beta, cfg.beta_bin, cfg.beta_max), []).append(i)

    keep = np.zeros(len(records), dtype=bool)
    for b in sorted(bins):
        idx = np.array(bins[b])
        positive = np.array([records[i].positive for i in idx])
        n_pos = int(positive.sum())
        n_tot = len(idx)
        if n_pos == 0:
            floor = min(cfg.zero_pos_floor, n_tot)
            chosen = rng.choice(idx, size=floor, replace=False) if floor else []
            keep[list(chosen)] = True
            continue
        pos_rate = 100.0 * n_pos / n_tot
        rate_neg, rate_pos = sample_rates(pos_rate, cfg.target_pos_rate)
        draws = rng.random(n_tot)
        rates = np.where(positive, rate_pos, rate_neg)
        keep[idx[draws < rates]] = True
    return [r for i, r in enumerate(records) if keep[i]]


def uniform_bin_undersample(records, cfg: BalanceConfig, rng: np.random.Generator) -> list[GraspRecord]:
    """Equalize the joint (camera elevation x beta) histogram to its smallest
    non-empty cell by sampling without replacement."""
    cells: dict[tuple[int, int], list[int]] = {}
    for i, r in enumerate(records):
        key = (
            _bin_index(r.cam_elev, cfg.elev_bin, cfg.elev_max),
            _bin_index(r.beta, cfg.beta_bin, cfg.beta_max),
        )
        cells.setdefault(key, []).append(i)
    if not cells:
        return []
    floor = min(len(v) for v in cells.values())
    keep = np.zeros(len(records), dtype=bool)
    for key in sorted(cells):
        idx = np.array(cells[key])
        chosen = rng.choice(idx, size=floor, replace=False)
        keep[chosen] = True
    return [r for i, r in enumerate(records) if keep[i]]


def split_objects(object_ids, fractions=(0.8, 0.1, 0.1), rng: np.random.Generator | None = None) -> SplitManifest:
    """Object-wise train/val/test partition (all records of an object land in
    exactly one split)."""
    if rng is None:
        rng = np.random.default_rng(0)
    ids = sorted(set(object_ids))
    if len(fractions) != 3 or abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError("fractions must be three values summing to 1")
    if len(ids) < sum(1 for f in fractions if f > 0):
        raise ValueError(f"cannot split {len(ids)} objects into 3 non-empty parts")
    order = list(rng.permutation(ids))
    counts = [int(math.floor(f * len(ids))) for f in fractions]
    # distribute the remainder by largest fractional part, ties toward train
    remainders = [f * len(ids) - c for f, c in zip(fractions, counts)]
    while sum(counts) < len(ids):
        i = int(np.argmax(remainders))
        counts[i] += 1
        remainders[i] = -1.0
    for i, f in enumerate(fractions):
        if f > 0 and counts[i] == 0:
            j = int(np.argmax(counts))
            counts[j] -= 1
            counts[i] += 1
    train = sorted(order[: counts[0]])
    val = sorted(order[counts[0] : counts[0] + counts[1]])
    test = sorted(order[counts[0] + counts[1] :])
    return SplitManifest(train=train, val=val, test=test, fractions=tuple(fractions))


# ---------------------------------------------------------------------------
# shard files


def write_shard(shard: RenderShard, path) -> None:
    """Shard file: "VGQ1" | u16 version | tensor block | JSON-lines records."""
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(SHARD_MAGIC)
        fh.write(struct.pack("<H", SHARD_VERSION))
        write_tensor(fh, shard.images)
        meta_line = json.dumps({"meta": shard.meta}, separators=(",", ":"), sort_keys=True)
        fh.write((meta_line + "\n").encode("utf-8"))
        for r in shard.records:
            fh.write((r.to_json() + "\n").encode("utf-8"))


def read_shard(path) -> RenderShard:
    path = Path(path)
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != SHARD_MAGIC:
            raise ShardFormatError(f"{path.name}: bad shard magic {magic!r}")
        raw = fh.read(2)
        if len(raw) != 2:
            raise ShardFormatError(f"{path.name}: truncated version field")
        (version,) = struct.unpack("<H", raw)
        if version != SHARD_VERSION:
            raise ShardFormatError(f"{path.name}: unsupported shard version {version}")
        try:
            images = read_tensor(fh)
        except ShardFormatError as e:
            raise ShardFormatError(f"{path.name}: {e}") from None
        if images.ndim != 3:
            raise ShardFormatError(f"{path.name}: image tensor must have rank 3")
        text = fh.read().decode("utf-8")
    meta: dict = {}
    records: list[GraspRecord] = []
    for line in text.splitlines():
        if not line:
            continue
        if not records and not meta and line.startswith('{"meta"'):
            meta = json.loads(line)["meta"]
            continue
        records.append(GraspRecord.from_json(line))
    shard = RenderShard(images=images, records=records, meta=meta)
    return shard


def write_dataset(shards, out_dir, seed: int, config_echo: dict | None = None) -> dict:
    """Write one shard file per object plus a manifest; returns the manifest."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    for shard in shards:
        name = f"{shard.meta.get('object_id', 'shard')}.vgqshard"
        write_shard(shard, out_dir / name)
        entries.append({"file": name, **shard.meta})
    manifest = {
        "format_version": SHARD_VERSION,
        "seed": seed,
        "config": config_echo or {},
        "shards": entries,
    }
    with open(out_dir / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest


def load_dataset(directory) -> list[RenderShard]:
    directory = Path(directory)
    with open(directory / "manifest.json", "r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    return [read_shard(directory / e["file"]) for e in manifest["shards"]]


def records_of(shards) -> list[GraspRecord]:
    out: list[GraspRecord] = []
    for s in shards:
        out.extend(s.records)
    return out


def write_records(records, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(r.to_json() + "\n")


def read_records(path) -> list[GraspRecord]:
    with open(path, "r", encoding="utf-8") as fh:
        return [GraspRecord.from_json(line) for line in fh if line.strip()]
