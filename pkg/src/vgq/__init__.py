"""Viewpoint-robust grasp quality toolkit.

A numpy/scipy pipeline that renders 6-DOF grasp-quality datasets over a wide
range of camera poses, trains two-stream quality networks on them, and serves
batched predictions through a shared image encoder.
"""

from .geometry import (
    CameraBounds,
    GraspAngles,
    RigidTransform,
    SphericalCameraPose,
    UnitQuaternion,
    camera_extrinsics,
    flip_if_below_table,
    relative_angles,
    rotate_about_grasp_x,
    sample_camera_pose,
)
from .meshes import StablePose, TriangleMesh, compute_stable_poses, load_mesh
from .quality import (
    Contact,
    ContactPair,
    GripperModel,
    ParallelJawGrasp,
    QualityConfig,
    QualityLabel,
    check_collision,
    contact_points,
    ferrari_canny_epsilon,
    robust_quality,
    sample_antipodal,
)
from .rendering import DepthImage, PinholeIntrinsics, default_intrinsics, project_tcp, render_depth
from .cropping import CropConfig
from .dataset import (
    BalanceConfig,
    GraspRecord,
    RenderConfig,
    RenderShard,
    SplitManifest,
    balance_positivity,
    filter_psi,
    read_shard,
    render_dataset,
    sample_rates,
    split_objects,
    uniform_bin_undersample,
    write_shard,
)
from .inference import GraspQuery, bench, predict, predict_shared, preprocess_fvgq, preprocess_vgq
from .evaluation import grid_report, metrics, run_ablation, subset_eval

__version__ = "0.1.0"
