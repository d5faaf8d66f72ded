"""Pure numpy fallback for the compute kernels.

Mirrors the interface of the compiled ``_kernels`` extension so the rest of
the package can run without a C toolchain.  Values agree with the compiled
backend; speed does not.  ``conv_efficient_values`` reuses the dense-window
route of the naive kernel here -- the truncated-kernel decomposition is only
worth implementing in C, and the cost accounting lives with the callers.
"""

from __future__ import annotations

import numpy as np

__all__ = ["expand_values", "pool_values", "conv_naive_values", "conv_efficient_values"]

# Local voxel enumeration (512 entries) and the per-level octant digits and
# node indices of each voxel's descent path.
_V = np.arange(512)
LOCAL_X = _V & 7
LOCAL_Y = (_V >> 3) & 7
LOCAL_Z = _V >> 6
_O1 = 4 * (LOCAL_Z >> 2) + 2 * (LOCAL_Y >> 2) + (LOCAL_X >> 2)
_O2 = 4 * ((LOCAL_Z >> 1) & 1) + 2 * ((LOCAL_Y >> 1) & 1) + ((LOCAL_X >> 1) & 1)
_O3 = 4 * (LOCAL_Z & 1) + 2 * (LOCAL_Y & 1) + (LOCAL_X & 1)
_N1 = 1 + _O1
_N2 = 9 + 8 * _O1 + _O2
_N3 = 73 + 64 * _O1 + 8 * _O2 + _O3


def _voxel_rows(tree_bits: np.ndarray, tree_prefix: np.ndarray) -> np.ndarray:
    """Payload row (within the tree) of each of the 512 finest voxels."""
    leaf = np.where(
        tree_bits[0] == 0,
        0,
        np.where(tree_bits[_N1] == 0, _N1, np.where(tree_bits[_N2] == 0, _N2, _N3)),
    )
    pa = (leaf - 1) >> 3
    before = np.where(leaf < 73, tree_prefix[np.minimum(leaf, 73)], tree_prefix[73])
    idx = 8 * tree_prefix[pa] + 1 - before + ((leaf - 1) & 7)
    return np.where(leaf == 0, 0, idx)


def _tree_coords(t: int, h: int, w: int) -> tuple[int, int, int]:
    return t // (h * w), (t // w) % h, t % w


def expand_values(bits, prefix, base, data, d, h, w, out, t0, t1):
    for t in range(t0, t1):
        rows = base[t] + _voxel_rows(bits[t], prefix[t])
        td, th, tw = _tree_coords(t, h, w)
        out[:, 8 * td + LOCAL_X, 8 * th + LOCAL_Y, 8 * tw + LOCAL_Z] = data[rows].T


def pool_values(bits, prefix, base, tensor, d, h, w, pool_kind, out_rows, t0, t1):
    channels = tensor.shape[0]
    for t in range(t0, t1):
        rows = _voxel_rows(bits[t], prefix[t])
        td, th, tw = _tree_coords(t, h, w)
        vals = tensor[:, 8 * td + LOCAL_X, 8 * th + LOCAL_Y, 8 * tw + LOCAL_Z].T
        nl = int(base[t + 1] - base[t])
        if pool_kind == 0:
            acc = np.full((nl, channels), -np.inf)
            np.maximum.at(acc, rows, vals)
        else:
            acc = np.zeros((nl, channels))
            np.add.at(acc, rows, vals.astype(np.float64))
            acc /= np.bincount(rows, minlength=nl)[:, None]
        out_rows[base[t]:base[t + 1]] = acc.astype(np.float32)


def _dense_conv_f64(tin, weights, bias):
    """Zero-padded convolution of the expanded grid, float64 accumulation.

    Tap (l, m, n) of the kernel reads the input at offset (radius - l, ...),
    which is correlation with the flipped weights.
    """
    radii = tuple(s // 2 for s in weights.shape[2:])
    padded = np.pad(
        tin.astype(np.float64),
        ((0, 0),) + tuple((r, r) for r in radii),
        mode="constant",
    )
    windows = np.lib.stride_tricks.sliding_window_view(padded, weights.shape[2:], axis=(1, 2, 3))
    flipped = weights[:, :, ::-1, ::-1, ::-1]
    out = np.einsum("cxyzlmn,oclmn->oxyz", windows, flipped)
    out += bias[:, None, None, None]
    return out


def conv_naive_values(bits, prefix, base, data, d, h, w, weights, bias, pool_kind, out_rows, t0, t1):
    tin = np.empty((data.shape[1], 8 * d, 8 * h, 8 * w), dtype=np.float32)
    expand_values(bits, prefix, base, data, d, h, w, tin, 0, d * h * w)
    result = _dense_conv_f64(tin, weights, bias).astype(np.float32)
    pool_values(bits, prefix, base, result, d, h, w, pool_kind, out_rows, t0, t1)


# Same values as the naive path; only the compiled backend implements the
# truncated-kernel evaluation, and operation statistics are derived by the
# caller from the structure alone.
conv_efficient_values = conv_naive_values
