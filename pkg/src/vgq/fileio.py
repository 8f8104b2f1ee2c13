"""Binary block formats shared by dataset shards and network checkpoints.

Tensor block ("VGT1"): magic | u32 rank | u32 dims[rank] | float32 payload,
all little-endian.
"""

from __future__ import annotations

import struct

import numpy as np

TENSOR_MAGIC = b"VGT1"

_MAX_RANK = 8
_MAX_DIM = 1 << 31


class ShardFormatError(ValueError):
    """Raised on corrupt or truncated binary blocks."""


def write_tensor(fh, array: np.ndarray) -> None:
    array = np.ascontiguousarray(array, dtype="<f4")
    fh.write(TENSOR_MAGIC)
    fh.write(struct.pack("<I", array.ndim))
    fh.write(struct.pack(f"<{array.ndim}I", *array.shape))
    fh.write(array.tobytes())


def read_tensor(fh) -> np.ndarray:
    magic = fh.read(4)
    if magic != TENSOR_MAGIC:
        raise ShardFormatError(f"bad tensor magic {magic!r}, expected {TENSOR_MAGIC!r}")
    raw = _read_exact(fh, 4, "tensor rank")
    (rank,) = struct.unpack("<I", raw)
    if rank == 0 or rank > _MAX_RANK:
        raise ShardFormatError(f"unreasonable tensor rank {rank}")
    raw = _read_exact(fh, 4 * rank, "tensor dims")
    dims = struct.unpack(f"<{rank}I", raw)
    if any(d > _MAX_DIM for d in dims):
        raise ShardFormatError(f"unreasonable tensor dims {dims}")
    count = int(np.prod(dims)) if dims else 0
    payload = _read_exact(fh, 4 * count, "tensor payload")
    return np.frombuffer(payload, dtype="<f4").reshape(dims).copy()


def _read_exact(fh, n: int, what: str) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise ShardFormatError(f"truncated file while reading {what}")
    return data
