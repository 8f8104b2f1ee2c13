from .layers import ShapeError, softmax, softmax_cross_entropy
from .network import (
    FVGQ_POSE_DIM,
    VGQ_POSE_DIM,
    NetworkSpec,
    encode_image,
    forward,
    forward_backward,
    fvgq_spec,
    head_forward,
    init_params,
    loss,
    vgq_spec,
)
from .training import (
    Checkpoint,
    best_threshold_metrics,
    NormStats,
    TrainConfig,
    TrainingData,
    TrainResult,
    learning_rate,
    load_checkpoint,
    normalize_images,
    normalize_poses,
    random_checkpoint,
    save_checkpoint,
    sgd_step,
    train,
)

__all__ = [
    "ShapeError",
    "softmax",
    "softmax_cross_entropy",
    "NetworkSpec",
    "VGQ_POSE_DIM",
    "FVGQ_POSE_DIM",
    "vgq_spec",
    "fvgq_spec",
    "init_params",
    "encode_image",
    "head_forward",
    "forward",
    "forward_backward",
    "loss",
    "Checkpoint",
    "best_threshold_metrics",
    "NormStats",
    "TrainConfig",
    "TrainingData",
    "TrainResult",
    "learning_rate",
    "normalize_images",
    "normalize_poses",
    "sgd_step",
    "train",
    "save_checkpoint",
    "load_checkpoint",
    "random_checkpoint",
]
