"""Crop-and-resize of depth images to network input resolution.

Both preprocessing pipelines and the dataset record convention share this
module so grasp pixel offsets mean the same thing everywhere: offsets are
expressed in output-image pixels, i.e. source-pixel offsets divided by
(crop_px / out_px). Bilinear resampling uses the half-pixel-center
convention: output pixel i samples source coordinate (i + 0.5) * scale - 0.5.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class CropConfig:
    """Window geometry for network input crops.

    kappa is the largest grasp-center offset max(|u|, |v|) in output pixels
    that the decoupled-crop pipeline accepts (and that training displaces
    grasps over).
    """

    crop_px: int = 96
    out_px: int = 32
    kappa: float = 8.0

    def __post_init__(self):
        if self.crop_px < self.out_px:
            raise ValueError("crop window must be at least the output size")
        if not 0 <= self.kappa <= self.out_px / 2:
            raise ValueError("kappa must lie in [0, out_px / 2]")

    @property
    def scale(self) -> float:
        """Source pixels per output pixel."""
        return self.crop_px / self.out_px


def extract_crop(image: np.ndarray, center_uv, crop_px: int) -> tuple[np.ndarray, bool]:
    """Square window around a continuous (u, v) center, clamped to the image
    with edge replication. Returns (window, clamped_flag)."""
    h, w = image.shape
    u, v = center_uv
    col0 = int(round(u - crop_px / 2.0))
    row0 = int(round(v - crop_px / 2.0))
    cols = np.arange(col0, col0 + crop_px)
    rows = np.arange(row0, row0 + crop_px)
    clamped = bool(cols[0] < 0 or rows[0] < 0 or cols[-1] >= w or rows[-1] >= h)
    cols = np.clip(cols, 0, w - 1)
    rows = np.clip(rows, 0, h - 1)
    return image[np.ix_(rows, cols)], clamped


def bilinear_resize(image: np.ndarray, out_px: int) -> np.ndarray:
    """Bilinear resample to out_px x out_px (half-pixel-center convention)."""
    h, w = image.shape
    sy, sx = h / out_px, w / out_px
    xs = (np.arange(out_px) + 0.5) * sx - 0.5
    ys = (np.arange(out_px) + 0.5) * sy - 0.5
    x0 = np.clip(np.floor(xs).astype(int), 0, w - 1)
    y0 = np.clip(np.floor(ys).astype(int), 0, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    wx = np.clip(xs - x0, 0.0, 1.0)
    wy = np.clip(ys - y0, 0.0, 1.0)
    top = image[np.ix_(y0, x0)] * (1 - wx) + image[np.ix_(y0, x1)] * wx
    bottom = image[np.ix_(y1, x0)] * (1 - wx) + image[np.ix_(y1, x1)] * wx
    return top * (1 - wy[:, None]) + bottom * wy[:, None]


def crop_and_resize(image: np.ndarray, center_uv, cfg: CropConfig) -> tuple[np.ndarray, bool]:
    window, clamped = extract_crop(image, center_uv, cfg.crop_px)
    return bilinear_resize(window, cfg.out_px), clamped


def image_center(image: np.ndarray) -> tuple[float, float]:
    """Geometric center of an image in continuous pixel coordinates."""
    h, w = image.shape
    return w / 2.0, h / 2.0
