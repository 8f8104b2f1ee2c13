"""Run-time grasp evaluation: the per-grasp crop pipeline, the single-crop
decoupled pipeline with a shared image encoder, and the latency benchmark
comparing them."""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .cropping import CropConfig, crop_and_resize, image_center
from .geometry import UnitQuaternion
from .nn import Checkpoint, NormStats, encode_image, head_forward, normalize_images, softmax
from .nn.layers import ShapeError
from .quality import ParallelJawGrasp
from .rendering import PinholeIntrinsics


@dataclass(frozen=True)
class GraspQuery:
    """A grasp to evaluate against one depth image: TCP projection in source
    pixels, camera-frame depth z in meters, orientation in the camera frame."""

    u_px: float
    v_px: float
    z: float
    q: UnitQuaternion

    def __post_init__(self):
        if self.z <= 0:
            raise ValueError("query depth must be positive")

    @classmethod
    def from_camera_grasp(cls, grasp: ParallelJawGrasp, intrinsics: PinholeIntrinsics) -> "GraspQuery":
        """Build a query from a grasp already expressed in the camera frame."""
        x, y, z = grasp.tcp
        if z <= 0:
            raise ValueError("grasp TCP lies behind the camera")
        return cls(
            u_px=float(x / z * intrinsics.fx + intrinsics.cx),
            v_px=float(y / z * intrinsics.fy + intrinsics.cy),
            z=float(z),
            q=grasp.orientation,
        )


@dataclass
class EncoderCache:
    """Image-stream output for one preprocessed image, reusable across
    predict calls against the same checkpoint."""

    encoding: np.ndarray  # (1, encoder_dim)
    spec_hash: str


def _pose_rows_vgq(queries, stats: NormStats) -> np.ndarray:
    rows = np.empty((len(queries), 5), dtype=np.float32)
    for i, qr in enumerate(queries):
        rows[i] = ((qr.z - stats.z_mean) / stats.z_std, qr.q.w, qr.q.x, qr.q.y, qr.q.z)
    return rows


def preprocess_vgq(depth: np.ndarray, queries, crop: CropConfig, stats: NormStats | None = None):
    """Per-grasp pipeline: one crop centered on every query.

    Returns (images (k,1,out,out), poses (k,5), clamped (k,) bool); clamped
    marks queries whose crop window ran past the image edge (filled by edge
    replication).
    """
    stats = stats if stats is not None else NormStats.identity()
    k = len(queries)
    images = np.empty((k, 1, crop.out_px, crop.out_px), dtype=np.float32)
    clamped = np.zeros(k, dtype=bool)
    for i, qr in enumerate(queries):
        window, cl = crop_and_resize(depth, (qr.u_px, qr.v_px), crop)
        images[i, 0] = window
        clamped[i] = cl
    images = normalize_images(images, stats)
    return images, _pose_rows_vgq(queries, stats), clamped


def preprocess_fvgq(depth: np.ndarray, queries, crop: CropConfig, stats: NormStats | None = None):
    """Decoupled pipeline: one centered crop for the whole batch, per-query
    grasp offsets passed through the pose rows.

    Returns (image (1,1,out,out), poses (k,7), ok (k,) bool); queries whose
    offset exceeds crop.kappa output pixels are rejected (ok False, pose row
    zeroed) and should fall back to the per-grasp pipeline.
    """
    stats = stats if stats is not None else NormStats.identity()
    center = image_center(depth)
    window, _ = crop_and_resize(depth, center, crop)
    image = normalize_images(window.reshape(1, 1, crop.out_px, crop.out_px).astype(np.float32), stats)
    half = crop.out_px / 2.0
    k = len(queries)
    poses = np.zeros((k, 7), dtype=np.float32)
    ok = np.ones(k, dtype=bool)
    for i, qr in enumerate(queries):
        u = (qr.u_px - center[0]) / crop.scale
        v = (qr.v_px - center[1]) / crop.scale
        if max(abs(u), abs(v)) > crop.kappa:
            ok[i] = False
            continue
        poses[i] = (u / half, v / half, (qr.z - stats.z_mean) / stats.z_std, qr.q.w, qr.q.x, qr.q.y, qr.q.z)
    return image, poses, ok


def predict(checkpoint: Checkpoint, images: np.ndarray, poses: np.ndarray, chunk: int = 8) -> np.ndarray:
    """Per-grasp forward pass; returns the success probability per row.

    Work is processed in small chunks: the convolution patch matrices then
    stay cache-resident, which is considerably faster than one huge batch.
    """
    out = np.empty(len(images), dtype=np.float32)
    for i in range(0, len(images), chunk):
        encoding = encode_image(checkpoint.spec, checkpoint.params, images[i : i + chunk])
        logits = head_forward(checkpoint.spec, checkpoint.params, encoding, poses[i : i + chunk])
        out[i : i + chunk] = softmax(logits)[:, 1]
    return out


def encode_shared(checkpoint: Checkpoint, image: np.ndarray) -> EncoderCache:
    """Run the image stream once for reuse across many grasp batches."""
    encoding = encode_image(checkpoint.spec, checkpoint.params, image)
    return EncoderCache(encoding=encoding, spec_hash=checkpoint.spec_hash)


def predict_shared(
    checkpoint: Checkpoint,
    image: np.ndarray | None,
    poses: np.ndarray,
    cache: EncoderCache | None = None,
) -> np.ndarray:
    """Shared-encoder prediction: the image is encoded once (or taken from the
    cache) and its encoding reused for every pose row; numerically equivalent
    to running the full forward per grasp."""
    if checkpoint.spec.variant != "fvgq":
        raise ValueError("shared-encoder prediction needs a decoupled-crop (fvgq) checkpoint")
    if cache is None:
        if image is None:
            raise ValueError("either an image or an encoder cache is required")
        cache = encode_shared(checkpoint, image)
    elif cache.spec_hash != checkpoint.spec_hash:
        raise ShapeError("encoder cache was built for a different checkpoint spec")
    logits = head_forward(checkpoint.spec, checkpoint.params, cache.encoding, poses)
    return softmax(logits)[:, 1]


# ---------------------------------------------------------------------------
# latency benchmark


@dataclass
class BenchRow:
    variant: str
    phase: str
    k: int
    mean_ms: float
    std_ms: float


@dataclass
class BenchReport:
    rows: list

    def mean_ms(self, variant: str, phase: str, k: int) -> float:
        for r in self.rows:
            if (r.variant, r.phase, r.k) == (variant, phase, k):
                return r.mean_ms
        raise KeyError((variant, phase, k))

    def speedup(self, phase: str, k: int) -> float:
        return self.mean_ms("vgq", phase, k) / self.mean_ms("fvgq", phase, k)

    def to_csv(self) -> str:
        lines = ["variant,phase,k,mean_ms,std_ms"]
        for r in self.rows:
            lines.append(f"{r.variant},{r.phase},{r.k},{r.mean_ms:.4f},{r.std_ms:.4f}")
        return "\n".join(lines) + "\n"


def _timed(fn, repeats: int, warmup: int) -> tuple[float, float]:
    import gc

    for _ in range(warmup):
        fn()
    samples = np.empty(repeats)
    enabled = gc.isenabled()
    gc.disable()
    try:
        for i in range(repeats):
            t0 = time.perf_counter()
            fn()
            samples[i] = time.perf_counter() - t0
    finally:
        if enabled:
            gc.enable()
    return float(samples.mean() * 1e3), float(samples.std() * 1e3)


def bench(
    checkpoints: dict,
    ks=(32, 64, 96, 128),
    repeats: int = 1000,
    warmup: int = 50,
    crop: CropConfig | None = None,
    image_px: int = 300,
    seed: int = 0,
) -> BenchReport:
    """Preprocessing and prediction latency of both pipelines per batch size.

    checkpoints maps "vgq" and "fvgq" to loaded checkpoints (specs must share
    the image stream). The scene is a synthetic depth image; queries are drawn
    inside the decoupled pipeline's kappa window so both pipelines evaluate
    the identical grasp set.
    """
    crop = crop if crop is not None else CropConfig()
    rng = np.random.default_rng(seed)
    depth = (0.7 + 0.05 * rng.standard_normal((image_px, image_px))).astype(np.float32)
    cx, cy = image_center(depth)
    rows: list[BenchRow] = []
    for k in ks:
        queries = [
            GraspQuery(
                u_px=cx + rng.uniform(-crop.kappa, crop.kappa) * crop.scale,
                v_px=cy + rng.uniform(-crop.kappa, crop.kappa) * crop.scale,
                z=rng.uniform(0.5, 0.9),
                q=UnitQuaternion(*rng.standard_normal(4)),
            )
            for _ in range(k)
        ]
        vgq_ckpt = checkpoints["vgq"]
        fvgq_ckpt = checkpoints["fvgq"]

        mean, std = _timed(lambda: preprocess_vgq(depth, queries, crop, vgq_ckpt.stats), repeats, warmup)
        rows.append(BenchRow("vgq", "preprocess", k, mean, std))
        images, poses, _ = preprocess_vgq(depth, queries, crop, vgq_ckpt.stats)
        mean, std = _timed(lambda: predict(vgq_ckpt, images, poses), repeats, warmup)
        rows.append(BenchRow("vgq", "predict", k, mean, std))

        mean, std = _timed(lambda: preprocess_fvgq(depth, queries, crop, fvgq_ckpt.stats), repeats, warmup)
        rows.append(BenchRow("fvgq", "preprocess", k, mean, std))
        image, fposes, _ = preprocess_fvgq(depth, queries, crop, fvgq_ckpt.stats)
        mean, std = _timed(lambda: predict_shared(fvgq_ckpt, image, fposes), repeats, warmup)
        rows.append(BenchRow("fvgq", "predict", k, mean, std))
    return BenchReport(rows=rows)


def per_grasp_flops(spec, k: int) -> float:
    """Static per-grasp cost: the shared-encoder path amortizes the image
    stream over the batch while the per-grasp path pays it every time."""
    if spec.variant == "fvgq":
        return spec.encoder_flops() / k + spec.head_flops()
    return spec.encoder_flops() + spec.head_flops()
