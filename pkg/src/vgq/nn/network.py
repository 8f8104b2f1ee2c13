"""Two-stream grasp quality network: a convolutional image stream and a small
fully-connected pose stream merged into fully-connected layers ending in two
class logits. The image stream doubles as a shared encoder at inference time,
so its layer plan is identical across variants; the variants differ only in
the pose input (z, q) vs (u, v, z, q) and the training-time cropping."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

import numpy as np

from .layers import (
    ShapeError,
    conv2d_backward,
    conv2d_forward,
    dense_backward,
    dense_forward,
    maxpool2_backward,
    maxpool2_forward,
    relu_backward,
    relu_forward,
    softmax,
    softmax_cross_entropy,
)

VGQ_POSE_DIM = 5  # (z, qw, qx, qy, qz)
FVGQ_POSE_DIM = 7  # (u, v, z, qw, qx, qy, qz)


@dataclass(frozen=True)
class NetworkSpec:
    """Layer plan. image_stream entries are ("conv", filters, kernel),
    ("pool",) or ("fc", units); pose_stream and merge_stream are fc widths.
    A final 2-logit layer is appended after merge_stream implicitly."""

    variant: str  # "vgq" | "fvgq"
    image_stream: tuple
    pose_stream: tuple
    merge_stream: tuple
    pose_input_dim: int
    image_px: int = 32

    def to_dict(self) -> dict:
        return {
            "variant": self.variant,
            "image_stream": [list(e) for e in self.image_stream],
            "pose_stream": list(self.pose_stream),
            "merge_stream": list(self.merge_stream),
            "pose_input_dim": self.pose_input_dim,
            "image_px": self.image_px,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkSpec":
        return cls(
            variant=d["variant"],
            image_stream=tuple(tuple(e) for e in d["image_stream"]),
            pose_stream=tuple(d["pose_stream"]),
            merge_stream=tuple(d["merge_stream"]),
            pose_input_dim=int(d["pose_input_dim"]),
            image_px=int(d["image_px"]),
        )

    def spec_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()

    # -- derived shapes ----------------------------------------------------

    def image_layer_shapes(self):
        """Yields (name, kind, in_shape, out_shape, w_shape) for the image stream."""
        c, hw = 1, self.image_px
        flat = None
        for i, entry in enumerate(self.image_stream):
            kind = entry[0]
            if kind == "conv":
                _, filters, kernel = entry
                yield (f"img{i}", "conv", (c, hw), (filters, hw), (filters, c, kernel, kernel))
                c = filters
            elif kind == "pool":
                yield (f"img{i}", "pool", (c, hw), (c, hw // 2), None)
                hw //= 2
            elif kind == "fc":
                _, units = entry
                d = flat if flat is not None else c * hw * hw
                yield (f"img{i}", "fc", (d,), (units,), (d, units))
                flat = units
            else:
                raise ShapeError(f"unknown image stream entry {entry!r}")
        if flat is None:
            raise ShapeError("image stream must end in at least one fc layer")

    def encoder_dim(self) -> int:
        last_fc = [e for e in self.image_stream if e[0] == "fc"]
        return last_fc[-1][1]

    def param_shapes(self) -> dict[str, tuple]:
        shapes: dict[str, tuple] = {}
        for name, kind, _in, _out, w in self.image_layer_shapes():
            if w is not None:
                shapes[f"{name}.W"] = w
                shapes[f"{name}.b"] = (w[0],) if kind == "conv" else (w[1],)
        d = self.pose_input_dim
        for i, units in enumerate(self.pose_stream):
            shapes[f"pose{i}.W"] = (d, units)
            shapes[f"pose{i}.b"] = (units,)
            d = units
        d = self.encoder_dim() + d
        for i, units in enumerate(self.merge_stream):
            shapes[f"merge{i}.W"] = (d, units)
            shapes[f"merge{i}.b"] = (units,)
            d = units
        shapes["out.W"] = (d, 2)
        shapes["out.b"] = (2,)
        return shapes

    def param_count(self) -> int:
        return sum(int(np.prod(s)) for s in self.param_shapes().values())

    # -- cost model ----------------------------------------------------------

    def encoder_flops(self) -> int:
        """Multiply-add count (x2) of the image stream for one image."""
        flops = 0
        for _name, kind, in_shape, out_shape, w in self.image_layer_shapes():
            if kind == "conv":
                f, hw = out_shape
                c = in_shape[0]
                k = w[2]
                flops += 2 * f * hw * hw * c * k * k
            elif kind == "fc":
                flops += 2 * w[0] * w[1]
        return flops

    def head_flops(self) -> int:
        """Multiply-add count (x2) of pose + merge streams for one grasp."""
        flops = 0
        d = self.pose_input_dim
        for units in self.pose_stream:
            flops += 2 * d * units
            d = units
        d = self.encoder_dim() + d
        for units in self.merge_stream:
            flops += 2 * d * units
            d = units
        return flops + 2 * d * 2


def vgq_spec(scaled: bool = False, extra_fc: bool = True) -> NetworkSpec:
    return _make_spec("vgq", VGQ_POSE_DIM, scaled, extra_fc)


def fvgq_spec(scaled: bool = False, extra_fc: bool = True) -> NetworkSpec:
    return _make_spec("fvgq", FVGQ_POSE_DIM, scaled, extra_fc)


def _make_spec(variant: str, pose_dim: int, scaled: bool, extra_fc: bool) -> NetworkSpec:
    conv = 16 if scaled else 64
    fc = 128 if scaled else 1024
    image_stream = (
        ("conv", conv, 7),
        ("conv", conv, 5),
        ("pool",),
        ("conv", conv, 3),
        ("conv", conv, 3),
        ("pool",),
        ("fc", fc),
    )
    merge = (fc, fc) if extra_fc else (fc,)
    return NetworkSpec(
        variant=variant,
        image_stream=image_stream,
        pose_stream=(16,),
        merge_stream=merge,
        pose_input_dim=pose_dim,
    )


def init_params(spec: NetworkSpec, rng: np.random.Generator, dtype=np.float32) -> dict[str, np.ndarray]:
    """Fan-in-scaled uniform init (He-uniform), zero biases."""
    params: dict[str, np.ndarray] = {}
    for name, shape in spec.param_shapes().items():
        if name.endswith(".b"):
            params[name] = np.zeros(shape, dtype=dtype)
        else:
            fan_in = int(np.prod(shape[1:])) if len(shape) == 4 else shape[0]
            limit = np.sqrt(6.0 / fan_in)
            params[name] = rng.uniform(-limit, limit, size=shape).astype(dtype)
    return params


# ---------------------------------------------------------------------------
# forward / backward


def encode_image(spec: NetworkSpec, params: dict, images: np.ndarray, want_cache: bool = False):
    """Run the image stream; images are (N, 1, px, px), already normalized."""
    if images.ndim != 4 or images.shape[1] != 1 or images.shape[2:] != (spec.image_px, spec.image_px):
        raise ShapeError(
            f"image input: expected (N, 1, {spec.image_px}, {spec.image_px}), got {images.shape}"
        )
    # layer kernels run channel-last internally
    x = np.ascontiguousarray(images.transpose(0, 2, 3, 1))
    cache = []
    for i, entry in enumerate(spec.image_stream):
        kind = entry[0]
        name = f"img{i}"
        if kind == "conv":
            x, c = conv2d_forward(x, params[f"{name}.W"], params[f"{name}.b"])
            x, r = relu_forward(x)
            cache.append((kind, name, c, r))
        elif kind == "pool":
            x, c = maxpool2_forward(x)
            cache.append((kind, name, c, None))
        else:  # fc
            pre_shape = x.shape if x.ndim == 4 else None
            if pre_shape is not None:
                x = x.reshape(len(x), -1)
            x, c = dense_forward(x, params[f"{name}.W"], params[f"{name}.b"])
            x, r = relu_forward(x)
            cache.append((kind, name, (c, pre_shape), r))
    return (x, cache) if want_cache else x


def head_forward(spec: NetworkSpec, params: dict, encoding: np.ndarray, poses: np.ndarray, want_cache: bool = False):
    """Pose stream + merge stream on top of an image encoding.

    encoding may have one row (shared) or one row per pose.
    """
    if poses.ndim != 2 or poses.shape[1] != spec.pose_input_dim:
        raise ShapeError(f"pose input: expected (N, {spec.pose_input_dim}), got {poses.shape}")
    x = poses
    cache = []
    for i in range(len(spec.pose_stream)):
        name = f"pose{i}"
        x, c = dense_forward(x, params[f"{name}.W"], params[f"{name}.b"])
        x, r = relu_forward(x)
        cache.append(("fc", name, c, r))
    enc = encoding if len(encoding) == len(x) else np.broadcast_to(encoding, (len(x), encoding.shape[1]))
    x = np.concatenate([enc, x], axis=1)
    split = enc.shape[1]
    for i in range(len(spec.merge_stream)):
        name = f"merge{i}"
        x, c = dense_forward(x, params[f"{name}.W"], params[f"{name}.b"])
        x, r = relu_forward(x)
        cache.append(("fc", name, c, r))
    logits, c = dense_forward(x, params["out.W"], params["out.b"])
    cache.append(("out", "out", c, None))
    return (logits, cache, split) if want_cache else logits


def forward(spec: NetworkSpec, params: dict, images: np.ndarray, poses: np.ndarray):
    """Full two-stream forward; returns (logits, probabilities)."""
    if len(images) != len(poses):
        raise ShapeError(f"batch mismatch: {len(images)} images vs {len(poses)} poses")
    encoding = encode_image(spec, params, images)
    logits = head_forward(spec, params, encoding, poses)
    return logits, softmax(logits)


def loss(logits: np.ndarray, labels: np.ndarray, params: dict, l2: float) -> float:
    """Mean softmax cross-entropy plus l2 * sum of squared weights (biases
    excluded from the penalty)."""
    ce, _, _ = softmax_cross_entropy(logits, labels)
    reg = sum(float(np.sum(np.square(v))) for k, v in params.items() if k.endswith(".W"))
    return float(ce) + l2 * reg


def forward_backward(spec: NetworkSpec, params: dict, images: np.ndarray, poses: np.ndarray, labels: np.ndarray, l2: float):
    """One training step's forward and gradient computation.

    Returns (loss_value, probs, grads) where grads covers every parameter and
    includes the l2 term (2 * l2 * W on weights).
    """
    enc, img_cache = encode_image(spec, params, images, want_cache=True)
    logits, head_cache, split = head_forward(spec, params, enc, poses, want_cache=True)
    ce, probs, dlogits = softmax_cross_entropy(logits, labels)

    # the concatenated (encoding, pose-features) vector feeds the first merge
    # layer, or the output layer when there are no merge layers
    split_at = "merge0" if spec.merge_stream else "out"
    grads: dict[str, np.ndarray] = {}
    d_enc = None
    d = dlogits
    for kind, name, c, r in reversed(head_cache):
        if kind == "out":
            d, grads["out.W"], grads["out.b"] = dense_backward(d, c, params["out.W"])
        else:
            d = relu_backward(d, r)
            d, grads[f"{name}.W"], grads[f"{name}.b"] = dense_backward(d, c, params[f"{name}.W"])
        if name == split_at:
            d_enc = d[:, :split]
            d = d[:, split:]
    if len(enc) == 1 and len(poses) > 1:
        d_enc = d_enc.sum(axis=0, keepdims=True)

    d = d_enc
    for kind, name, c, r in reversed(img_cache):
        if kind == "conv":
            d = relu_backward(d, r)
            d, grads[f"{name}.W"], grads[f"{name}.b"] = conv2d_backward(d, c)
        elif kind == "pool":
            d = maxpool2_backward(d, c)
        else:
            dense_cache, pre_shape = c
            d = relu_backward(d, r)
            d, grads[f"{name}.W"], grads[f"{name}.b"] = dense_backward(d, dense_cache, params[f"{name}.W"])
            if pre_shape is not None:
                d = d.reshape(pre_shape)

    reg = 0.0
    if l2:
        for k, v in params.items():
            if k.endswith(".W"):
                grads[k] = grads[k] + 2.0 * l2 * v
                reg += float(np.sum(np.square(v)))
    total = float(ce) + l2 * reg
    return total, probs, grads
