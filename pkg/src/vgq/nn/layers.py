"""Numpy layer kernels with forward and backward passes.

Convolutions are stride-1 with same padding (odd kernels only) via im2col and
a single BLAS matmul; pooling is non-overlapping 2x2 max with single-winner
gradient routing. Spatial activations are laid out NHWC internally (channel
contiguous) which keeps the im2col gather cache-friendly; weights keep the
(F, C, k, k) shape at the interface. Kernels preserve the dtype of their
inputs so float64 can be used for finite-difference checks.
"""

from __future__ import annotations

import numpy as np


class ShapeError(ValueError):
    """Input/parameter shape mismatch, naming the offending layer."""


def conv2d_forward(x: np.ndarray, weights: np.ndarray, bias: np.ndarray):
    """x: (N, H, W, C); weights: (F, C, k, k); bias: (F,). Returns (out, cache)."""
    n, h, w, c = x.shape
    f, cw, k, k2 = weights.shape
    if cw != c or k != k2:
        raise ShapeError(f"conv weights {weights.shape} incompatible with input {x.shape}")
    if k % 2 != 1:
        raise ShapeError("conv kernels must be odd-sized for same padding")
    cols = _im2col(x, k)  # (N*H*W, k*k*C)
    wmat = np.ascontiguousarray(weights.transpose(2, 3, 1, 0).reshape(k * k * c, f))
    out = (cols @ wmat + bias).reshape(n, h, w, f)
    return out, (x.shape, cols, weights, wmat)


def conv2d_backward(dout: np.ndarray, cache):
    x_shape, cols, weights, wmat = cache
    n, h, w, c = x_shape
    f, _, k, _ = weights.shape
    dflat = dout.reshape(n * h * w, f)
    dw = (cols.T @ dflat).reshape(k, k, c, f).transpose(3, 2, 0, 1)
    db = dflat.sum(axis=0)
    dcols = dflat @ wmat.T  # (N*H*W, k*k*C)
    dx = _col2im(dcols, x_shape, k)
    return dx, np.ascontiguousarray(dw), db


def _im2col(x: np.ndarray, k: int) -> np.ndarray:
    """(N, H, W, C) -> (N*H*W, k*k*C) patch matrix for same-padded conv."""
    n, h, w, c = x.shape
    pad = k // 2
    xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad), (0, 0)))
    windows = np.lib.stride_tricks.sliding_window_view(xp, (k, k), axis=(1, 2))
    # (N, H, W, C, k, k) -> (N, H, W, k, k, C): channel stays innermost
    return np.ascontiguousarray(windows.transpose(0, 1, 2, 4, 5, 3)).reshape(n * h * w, k * k * c)


def _col2im(dcols: np.ndarray, x_shape, k: int) -> np.ndarray:
    n, h, w, c = x_shape
    pad = k // 2
    dxp = np.zeros((n, h + 2 * pad, w + 2 * pad, c), dtype=dcols.dtype)
    dcols = dcols.reshape(n, h, w, k, k, c)
    for i in range(k):
        for j in range(k):
            dxp[:, i : i + h, j : j + w, :] += dcols[:, :, :, i, j, :]
    return dxp[:, pad : pad + h, pad : pad + w, :]


def maxpool2_forward(x: np.ndarray):
    """Non-overlapping 2x2 max pooling on (N, H, W, C)."""
    n, h, w, c = x.shape
    if h % 2 or w % 2:
        raise ShapeError(f"maxpool2 needs even spatial dims, got {x.shape}")
    ho, wo = h // 2, w // 2
    patches = np.ascontiguousarray(
        x.reshape(n, ho, 2, wo, 2, c).transpose(0, 1, 3, 2, 4, 5)
    ).reshape(n, ho, wo, 4, c)
    winner = patches.argmax(axis=3)
    out = np.take_along_axis(patches, winner[:, :, :, None, :], axis=3)[:, :, :, 0, :]
    return out, (x.shape, winner)


def maxpool2_backward(dout: np.ndarray, cache):
    x_shape, winner = cache
    n, h, w, c = x_shape
    ho, wo = h // 2, w // 2
    dpatches = np.zeros((n, ho, wo, 4, c), dtype=dout.dtype)
    np.put_along_axis(dpatches, winner[:, :, :, None, :], dout[:, :, :, None, :], axis=3)
    return (
        dpatches.reshape(n, ho, wo, 2, 2, c)
        .transpose(0, 1, 3, 2, 4, 5)
        .reshape(n, h, w, c)
    )


def dense_forward(x: np.ndarray, weights: np.ndarray, bias: np.ndarray):
    """x: (N, D); weights: (D, U); bias: (U,)."""
    if x.shape[1] != weights.shape[0]:
        raise ShapeError(f"dense weights {weights.shape} incompatible with input {x.shape}")
    return x @ weights + bias, x


def dense_backward(dout: np.ndarray, cache, weights: np.ndarray):
    x = cache
    return dout @ weights.T, x.T @ dout, dout.sum(axis=0)


def relu_forward(x: np.ndarray):
    return np.maximum(x, 0), x


def relu_backward(dout: np.ndarray, cache):
    return dout * (cache > 0)


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def softmax_cross_entropy(logits: np.ndarray, labels: np.ndarray):
    """Mean cross-entropy of integer labels; returns (loss, probs, dlogits)."""
    n = len(logits)
    probs = softmax(logits)
    eps = np.finfo(probs.dtype).tiny
    loss = -np.log(np.maximum(probs[np.arange(n), labels], eps)).mean()
    dlogits = probs.copy()
    dlogits[np.arange(n), labels] -= 1.0
    dlogits /= n
    return loss, probs, dlogits
