"""Layered run configuration: built-in defaults, then config files, then
command-line overrides. Files are plain "key = value" lines with # comments;
unknown keys and out-of-range values are rejected up front."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, replace
from pathlib import Path

from .cropping import CropConfig
from .dataset import BalanceConfig, RenderConfig
from .geometry import CameraBounds
from .nn import TrainConfig
from .quality import GripperModel, QualityConfig


class ConfigError(ValueError):
    """Bad key, type or value in a run configuration."""


def _positive(v):
    return v > 0


def _fraction(v):
    return 0.0 < v < 1.0


_SCHEMA: dict[str, tuple] = {
    # key: (type, default, validator or None, "description")
    "seed": (int, 0, None, "top-level seed for all named substreams"),
    "workers": (int, 1, _positive, "parallel render workers"),
    "mesh_count": (int, 24, _positive, "number of procedural primitive meshes"),
    "r_min": (float, 0.4, _positive, "camera radius lower bound [m]"),
    "r_max": (float, 1.1, _positive, "camera radius upper bound [m]"),
    "elev_min": (float, 0.0, lambda v: 0.0 <= v <= 90.0, "camera elevation lower bound [deg]"),
    "elev_max": (float, 70.0, lambda v: 0.0 < v <= 90.0, "camera elevation upper bound [deg]"),
    "polar_min": (float, 0.0, lambda v: 0.0 <= v <= 360.0, "camera azimuth lower bound [deg]"),
    "polar_max": (float, 360.0, lambda v: 0.0 <= v <= 360.0, "camera azimuth upper bound [deg]"),
    "cameras_per_pose": (int, 20, _positive, "rendered camera poses per stable pose"),
    "grasps_per_object": (int, 200, _positive, "antipodal grasps sampled per object"),
    "max_stable_poses": (int, 4, _positive, "stable poses kept per object"),
    "image_size": (int, 300, _positive, "rendered depth image resolution [px]"),
    "max_width": (float, 0.08, _positive, "gripper jaw opening [m]"),
    "friction": (float, 0.6, lambda v: v >= 0, "contact friction coefficient"),
    "cone_edges": (int, 8, lambda v: v >= 4, "friction cone discretization"),
    "torsion": (float, 0.03, _positive, "torsional resistance (normalized wrench units)"),
    "quality_threshold": (float, 0.027, _positive, "positive-label threshold on rho"),
    "quality_samples": (int, 25, _positive, "robustness perturbation samples"),
    "sigma_translation": (float, 0.0025, lambda v: v >= 0, "grasp jitter sigma [m]"),
    "sigma_rotation": (float, 2.9, lambda v: v >= 0, "grasp jitter sigma [deg]"),
    "sigma_friction": (float, 0.1, lambda v: v >= 0, "friction jitter sigma"),
    "finger_length": (float, 0.06, _positive, "gripper finger length [m]"),
    "finger_thickness": (float, 0.01, _positive, "gripper finger thickness [m]"),
    "finger_depth": (float, 0.015, _positive, "gripper finger depth [m]"),
    "palm_depth": (float, 0.02, _positive, "gripper palm depth [m]"),
    "approach_standoff": (float, 0.1, _positive, "collision sweep start distance [m]"),
    "sweep_step": (float, 0.005, _positive, "collision sweep step [m]"),
    "psi_max": (float, 90.0, lambda v: 0.0 < v <= 90.0, "max angle to camera ray [deg]"),
    "target_pos_rate": (float, 19.0, lambda v: 0.0 < v < 100.0, "balancing target positivity [%]"),
    "beta_bin": (float, 5.0, _positive, "approach-angle bin width [deg]"),
    "elev_bin": (float, 5.0, _positive, "camera-elevation bin width [deg]"),
    "zero_pos_floor": (int, 10, lambda v: v >= 0, "negatives kept in positive-free bins"),
    "train_frac": (float, 0.8, _fraction, "object split fraction: train"),
    "val_frac": (float, 0.1, _fraction, "object split fraction: validation"),
    "test_frac": (float, 0.1, _fraction, "object split fraction: test"),
    "variant": (str, "vgq", lambda v: v in ("vgq", "fvgq"), "network variant"),
    "scaled": (bool, True, None, "use the small desk-scale layer widths"),
    "momentum": (float, 0.9, lambda v: 0.0 <= v <= 1.0, "SGD momentum"),
    "base_lr": (float, 0.001, _fraction, "base learning rate"),
    "lr_decay": (float, 0.95, _fraction, "learning-rate decay factor"),
    "decay_interval": (int, 50_000, _positive, "iterations between decays"),
    "l2": (float, 0.0005, lambda v: v >= 0, "weight penalty"),
    "batch_size": (int, 64, _positive, "training batch size"),
    "max_iterations": (int, 10_000, _positive, "training iterations"),
    "val_interval": (int, 500, _positive, "iterations between validations"),
    "crop_px": (int, 96, _positive, "source crop size [px]"),
    "out_px": (int, 32, _positive, "network input size [px]"),
    "kappa": (float, 8.0, lambda v: v >= 0, "max grasp offset in output pixels"),
    "bench_k": (str, "32,64,96,128", None, "comma-separated batch sizes"),
    "bench_repeats": (int, 1000, _positive, "benchmark repetitions"),
    "bench_warmup": (int, 50, lambda v: v >= 0, "benchmark warmup runs"),
    "ablation_seeds": (int, 8, _positive, "training seeds per ablation point"),
}


@dataclass
class RunConfig:
    values: dict

    def __getitem__(self, key: str):
        return self.values[key]

    def config_hash(self) -> str:
        blob = json.dumps(self.values, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]

    def echo(self) -> str:
        return "\n".join(f"{k} = {self.values[k]}" for k in sorted(self.values))

    # -- typed views ---------------------------------------------------------

    def camera_bounds(self) -> CameraBounds:
        v = self.values
        return CameraBounds(
            r_min=v["r_min"],
            r_max=v["r_max"],
            polar_min=v["polar_min"],
            polar_max=v["polar_max"],
            elev_min=v["elev_min"],
            elev_max=v["elev_max"],
        )

    def gripper(self) -> GripperModel:
        v = self.values
        return GripperModel(
            finger_length=v["finger_length"],
            finger_thickness=v["finger_thickness"],
            finger_depth=v["finger_depth"],
            palm_depth=v["palm_depth"],
            approach_standoff=v["approach_standoff"],
            sweep_step=v["sweep_step"],
        )

    def quality(self) -> QualityConfig:
        v = self.values
        return QualityConfig(
            friction=v["friction"],
            cone_edges=v["cone_edges"],
            torsion=v["torsion"],
            threshold=v["quality_threshold"],
            samples=v["quality_samples"],
            sigma_translation=v["sigma_translation"],
            sigma_rotation=v["sigma_rotation"],
            sigma_friction=v["sigma_friction"],
            gripper=self.gripper(),
        )

    def render(self) -> RenderConfig:
        v = self.values
        return RenderConfig(
            cameras_per_pose=v["cameras_per_pose"],
            grasps_per_object=v["grasps_per_object"],
            max_stable_poses=v["max_stable_poses"],
            image_size=v["image_size"],
            max_width=v["max_width"],
            bounds=self.camera_bounds(),
            quality=self.quality(),
            crop=self.crop(),
        )

    def balance(self) -> BalanceConfig:
        v = self.values
        return BalanceConfig(
            target_pos_rate=v["target_pos_rate"],
            beta_bin=v["beta_bin"],
            elev_bin=v["elev_bin"],
            psi_max=v["psi_max"],
            elev_max=v["elev_max"],
            zero_pos_floor=v["zero_pos_floor"],
        )

    def crop(self) -> CropConfig:
        v = self.values
        return CropConfig(crop_px=v["crop_px"], out_px=v["out_px"], kappa=v["kappa"])

    def train_config(self, seed_offset: int = 0) -> TrainConfig:
        v = self.values
        return TrainConfig(
            momentum=v["momentum"],
            base_lr=v["base_lr"],
            lr_decay=v["lr_decay"],
            decay_interval=v["decay_interval"],
            l2=v["l2"],
            batch_size=v["batch_size"],
            max_iterations=v["max_iterations"],
            val_interval=v["val_interval"],
            seed=v["seed"] + seed_offset,
        )

    def split_fractions(self) -> tuple[float, float, float]:
        v = self.values
        fr = (v["train_frac"], v["val_frac"], v["test_frac"])
        if abs(sum(fr) - 1.0) > 1e-9:
            raise ConfigError("train_frac + val_frac + test_frac must equal 1")
        return fr

    def bench_ks(self) -> tuple[int, ...]:
        try:
            ks = tuple(int(s) for s in self.values["bench_k"].split(","))
        except ValueError:
            raise ConfigError("bench_k must be comma-separated integers") from None
        if not ks or any(k <= 0 for k in ks):
            raise ConfigError("bench_k entries must be positive")
        return ks


def _convert(key: str, raw, target):
    if isinstance(raw, target):
        return raw
    text = str(raw).strip()
    try:
        if target is bool:
            if text.lower() in ("1", "true", "yes", "on"):
                return True
            if text.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        return target(text)
    except ValueError:
        raise ConfigError(f"config key {key!r}: cannot parse {raw!r} as {target.__name__}") from None


def _parse_file(path: Path) -> dict:
    out = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path.name}: line {lineno}: expected 'key = value'")
            key, value = (s.strip() for s in line.split("=", 1))
            out[key] = value
    return out


def load_config(paths=(), overrides=()) -> RunConfig:
    """Resolve a run configuration.

    paths: config files in precedence order (later wins); overrides:
    "key=value" strings from the command line (win over files). Raises
    ConfigError naming the key for unknown keys, bad types or out-of-range
    values.
    """
    values = {k: spec[1] for k, spec in _SCHEMA.items()}
    layers = [(_parse_file(Path(p)), str(p)) for p in paths]
    cli_layer = {}
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r}: expected key=value")
        key, value = (s.strip() for s in item.split("=", 1))
        cli_layer[key] = value
    layers.append((cli_layer, "<command line>"))
    for layer, origin in layers:
        for key, raw in layer.items():
            if key not in _SCHEMA:
                raise ConfigError(f"{origin}: unknown config key {key!r}")
            target, _default, validator, _desc = _SCHEMA[key]
            value = _convert(key, raw, target)
            if validator is not None and not validator(value):
                raise ConfigError(f"{origin}: config key {key!r}: value {value!r} out of range")
            values[key] = value
    cfg = RunConfig(values=values)
    cfg.split_fractions()
    cfg.bench_ks()
    if values["r_min"] > values["r_max"]:
        raise ConfigError("config key 'r_min': must not exceed r_max")
    if values["elev_min"] > values["elev_max"]:
        raise ConfigError("config key 'elev_min': must not exceed elev_max")
    return cfg


def describe_keys() -> str:
    lines = []
    for key, (target, default, _v, desc) in sorted(_SCHEMA.items()):
        lines.append(f"{key} ({target.__name__}, default {default!r}): {desc}")
    return "\n".join(lines)
