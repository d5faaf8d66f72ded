"""Dense tensor reference operations.

Dense tensors are float32 numpy arrays of shape (channels, X, Y, Z).  These
operations define the semantics that the octree-structured counterparts
must reproduce: convolution with zero padding and stride 1, 2x2x2 pooling
and unpooling, and elementwise maps.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import ndimage

__all__ = [
    "ConvKernel",
    "dense_conv",
    "dense_maxpool2",
    "dense_avgpool2",
    "dense_unpool2",
    "dense_pointwise",
    "relu",
]


@dataclass(frozen=True)
class ConvKernel:
    """Convolution weights (out_channels, in_channels, L, M, N) plus bias.

    Kernel dimensions must be odd so the window is centred; tap (l, m, n)
    of output voxel (i, j, k) reads input (i - l + L//2, j - m + M//2,
    k - n + N//2), zero outside the volume.
    """

    weights: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        w = np.ascontiguousarray(self.weights, dtype=np.float32)
        if w.ndim != 5:
            raise ValueError("weights must have shape (out_channels, in_channels, L, M, N)")
        if any(s < 1 or s % 2 == 0 for s in w.shape[2:]):
            raise ValueError(f"kernel dims must be odd and positive, got {w.shape[2:]}")
        b = np.ascontiguousarray(self.bias, dtype=np.float32)
        if b.shape != (w.shape[0],):
            raise ValueError(f"bias must have shape ({w.shape[0]},), got {b.shape}")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", b)

    @property
    def out_channels(self) -> int:
        return self.weights.shape[0]

    @property
    def in_channels(self) -> int:
        return self.weights.shape[1]

    @property
    def taps(self) -> tuple[int, int, int]:
        return self.weights.shape[2:]


def _check_tensor(t: np.ndarray) -> np.ndarray:
    t = np.asarray(t)
    if t.ndim != 4:
        raise ValueError("dense tensor must have shape (channels, X, Y, Z)")
    return t


def dense_conv(t: np.ndarray, kernel: ConvKernel) -> np.ndarray:
    """Centred convolution, zero padded, stride 1, float64 accumulation."""
    t = _check_tensor(t)
    if t.shape[0] != kernel.in_channels:
        raise ValueError(f"tensor has {t.shape[0]} channels, kernel expects {kernel.in_channels}")
    t64 = t.astype(np.float64)
    w64 = kernel.weights.astype(np.float64)
    out = np.empty((kernel.out_channels,) + t.shape[1:], dtype=np.float64)
    for co in range(kernel.out_channels):
        acc = np.full(t.shape[1:], float(kernel.bias[co]), dtype=np.float64)
        for ci in range(kernel.in_channels):
            acc += ndimage.convolve(t64[ci], w64[co, ci], mode="constant", cval=0.0)
        out[co] = acc
    return out.astype(np.float32)


def dense_maxpool2(t: np.ndarray) -> np.ndarray:
    """Non-overlapping 2x2x2 max pooling; spatial dims must be even."""
    t = _check_tensor(t)
    c, x, y, z = t.shape
    if x % 2 or y % 2 or z % 2:
        raise ValueError(f"spatial dims must be even for 2x pooling, got {t.shape[1:]}")
    return t.reshape(c, x // 2, 2, y // 2, 2, z // 2, 2).max(axis=(2, 4, 6))


def dense_avgpool2(t: np.ndarray) -> np.ndarray:
    """Average counterpart of dense_maxpool2.

    Accumulates the eight block voxels in float64, first grid axis fastest,
    so structured average pooling can be compared bit for bit.
    """
    t = _check_tensor(t)
    c, x, y, z = t.shape
    if x % 2 or y % 2 or z % 2:
        raise ValueError(f"spatial dims must be even for 2x pooling, got {t.shape[1:]}")
    acc = np.zeros((c, x // 2, y // 2, z // 2), dtype=np.float64)
    for dz in (0, 1):
        for dy in (0, 1):
            for dx in (0, 1):
                acc += t[:, dx::2, dy::2, dz::2]
    return (acc / 8.0).astype(np.float32)


def dense_unpool2(t: np.ndarray) -> np.ndarray:
    """Nearest-neighbour upsampling by 2 along each spatial axis."""
    t = _check_tensor(t)
    return np.repeat(np.repeat(np.repeat(t, 2, axis=1), 2, axis=2), 2, axis=3)


def dense_pointwise(t: np.ndarray, fn: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
    """Apply an elementwise map; shape is preserved."""
    t = _check_tensor(t)
    out = np.asarray(fn(t.copy()))
    if out.shape != t.shape:
        raise ValueError(f"pointwise fn changed shape {t.shape} -> {out.shape}")
    return out.astype(np.float32)


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0)
