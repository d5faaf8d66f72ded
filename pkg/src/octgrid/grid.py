"""Hybrid grid-octree container.

A ``GridOctree`` is a D x H x W array of shallow octrees covering a voxel
volume of resolution (8D, 8H, 8W).  Global voxel (i, j, k) belongs to tree
(i//8, j//8, k//8) at local coordinates (i%8, j%8, k%8); trees are stored
row-major in (d, h, w).

Leaf values are float32 vectors of ``channels`` entries, kept in one flat
(num_leaves, channels) array: per-tree blocks in tree order, leaves inside
a tree ordered by ``data_index``, channels innermost.  Grids are immutable
after construction; operations return new grids.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import backend as _backend
from .tree import TreeBits, data_index, enumerate_leaves, node_extent, num_leaves, voxel_depth

__all__ = [
    "Pool",
    "GridStructure",
    "GridOctree",
    "VoxelAddr",
    "locate",
    "get",
    "oct_to_ten",
    "ten_to_oct",
    "wrap_dense",
    "same_structure",
]


class Pool(enum.Enum):
    """Pooling rule used when several voxels collapse into one leaf."""

    MAX = "max"
    AVG = "avg"

    @classmethod
    def coerce(cls, value) -> "Pool":
        if isinstance(value, Pool):
            return value
        name = str(value).lower()
        if name in ("max", "maximum"):
            return cls.MAX
        if name in ("avg", "average", "mean"):
            return cls.AVG
        raise ValueError(f"unknown pooling rule {value!r}")


_POOL_CODE = {Pool.MAX: 0, Pool.AVG: 1}


@dataclass(frozen=True)
class GridStructure:
    """Tree layout of a grid: dimensions plus one TreeBits per tree."""

    dims: tuple[int, int, int]
    trees: tuple[TreeBits, ...]

    def __post_init__(self):
        d, h, w = self.dims
        if d < 1 or h < 1 or w < 1:
            raise ValueError(f"grid dims must be positive, got {self.dims}")
        if len(self.trees) != d * h * w:
            raise ValueError(f"expected {d * h * w} trees for dims {self.dims}, got {len(self.trees)}")

    @property
    def n_trees(self) -> int:
        d, h, w = self.dims
        return d * h * w

    @property
    def resolution(self) -> tuple[int, int, int]:
        d, h, w = self.dims
        return 8 * d, 8 * h, 8 * w

    def num_values(self) -> int:
        return sum(num_leaves(t) for t in self.trees)


def pack_structure(structure: GridStructure):
    """Flat arrays consumed by the compute kernels.

    Returns (bits, prefix, base): per-tree unpacked split bits (n, 73) uint8,
    prefix popcounts (n, 74) int32 with prefix[t, i] counting set bits below
    i, and payload-row offsets (n + 1,) int64.
    """
    n = structure.n_trees
    raw = np.empty((n, 10), dtype=np.uint8)
    for t, tree in enumerate(structure.trees):
        raw[t] = np.frombuffer(tree.to_bytes(), dtype=np.uint8)
    bits = np.unpackbits(raw, axis=1, bitorder="little")[:, :73]
    bits = np.ascontiguousarray(bits)
    prefix = np.zeros((n, 74), dtype=np.int32)
    np.cumsum(bits, axis=1, out=prefix[:, 1:])
    base = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(1 + 7 * prefix[:, 73], out=base[1:])
    return bits, prefix, base


class GridOctree:
    """Immutable grid of shallow octrees with a flat float32 value array."""

    def __init__(self, structure: GridStructure, data: np.ndarray):
        data = np.ascontiguousarray(data, dtype=np.float32)
        if data.ndim != 2:
            raise ValueError("data must be a (num_leaves, channels) array")
        total = structure.num_values()
        if data.shape[0] != total:
            raise ValueError(f"structure has {total} leaves but data has {data.shape[0]} rows")
        if data.shape[1] < 1:
            raise ValueError("grid needs at least one channel")
        data.setflags(write=False)
        self._structure = structure
        self._data = data
        self._packed = None

    @classmethod
    def filled(cls, structure: GridStructure, channels: int, value: float = 0.0) -> "GridOctree":
        data = np.full((structure.num_values(), channels), value, dtype=np.float32)
        return cls(structure, data)

    @property
    def structure(self) -> GridStructure:
        return self._structure

    @property
    def dims(self) -> tuple[int, int, int]:
        return self._structure.dims

    @property
    def resolution(self) -> tuple[int, int, int]:
        return self._structure.resolution

    @property
    def trees(self) -> tuple[TreeBits, ...]:
        return self._structure.trees

    @property
    def channels(self) -> int:
        return self._data.shape[1]

    @property
    def data(self) -> np.ndarray:
        return self._data

    @property
    def n_trees(self) -> int:
        return self._structure.n_trees

    def packed(self):
        if self._packed is None:
            self._packed = pack_structure(self._structure)
        return self._packed

    @property
    def tree_base(self) -> np.ndarray:
        return self.packed()[2]

    def __repr__(self) -> str:
        d, h, w = self.dims
        return f"GridOctree(dims=({d}, {h}, {w}), channels={self.channels}, values={self._data.shape[0]})"


@dataclass(frozen=True)
class VoxelAddr:
    """Resolved location of one voxel: owning tree, leaf node, payload row
    and the global extent of the leaf."""

    tree_index: int
    node: int
    data_offset: int
    origin: tuple[int, int, int]
    size: int


def locate(grid: GridOctree, i: int, j: int, k: int) -> VoxelAddr:
    """Address of the leaf containing global voxel (i, j, k)."""
    x, y, z = grid.resolution
    if not (0 <= i < x and 0 <= j < y and 0 <= k < z):
        raise IndexError(f"voxel ({i}, {j}, {k}) outside resolution {grid.resolution}")
    d, h, w = grid.dims
    t = ((i >> 3) * h + (j >> 3)) * w + (k >> 3)
    tree = grid.trees[t]
    _, node = voxel_depth(tree, i & 7, j & 7, k & 7)
    (ox, oy, oz), size = node_extent(node)
    row = int(grid.tree_base[t]) + data_index(tree, node)
    origin = ((i >> 3 << 3) + ox, (j >> 3 << 3) + oy, (k >> 3 << 3) + oz)
    return VoxelAddr(t, node, row, origin, size)


def get(grid: GridOctree, i: int, j: int, k: int) -> np.ndarray:
    """The channel vector stored at voxel (i, j, k)."""
    return grid.data[locate(grid, i, j, k).data_offset].copy()


def oct_to_ten(grid: GridOctree, backend: str | None = None) -> np.ndarray:
    """Expand to a dense (channels, 8D, 8H, 8W) float32 tensor, replicating
    each leaf value over its extent."""
    kern = _backend.get(backend)
    bits, prefix, base = grid.packed()
    d, h, w = grid.dims
    out = np.empty((grid.channels, 8 * d, 8 * h, 8 * w), dtype=np.float32)
    kern.expand_values(bits, prefix, base, grid.data, d, h, w, out, 0, grid.n_trees)
    return out


def ten_to_oct(tensor: np.ndarray, structure: GridStructure, pool, backend: str | None = None) -> GridOctree:
    """Collapse a dense tensor onto a given structure, pooling each leaf's
    extent with ``pool``."""
    pool = Pool.coerce(pool)
    kern = _backend.get(backend)
    tensor = np.ascontiguousarray(tensor, dtype=np.float32)
    if tensor.ndim != 4:
        raise ValueError("tensor must have shape (channels, X, Y, Z)")
    if tensor.shape[1:] != structure.resolution:
        raise ValueError(f"tensor shape {tensor.shape[1:]} does not match structure resolution {structure.resolution}")
    bits, prefix, base = pack_structure(structure)
    d, h, w = structure.dims
    out = np.empty((int(base[-1]), tensor.shape[0]), dtype=np.float32)
    kern.pool_values(bits, prefix, base, tensor, d, h, w, _POOL_CODE[pool], out, 0, structure.n_trees)
    return GridOctree(structure, out)


def wrap_dense(
    f: Callable[[np.ndarray], np.ndarray],
    grid: GridOctree,
    pool,
    out_structure: GridStructure | None = None,
    backend: str | None = None,
) -> GridOctree:
    """Run a dense tensor operation on the expanded grid and pool the result
    back onto an octree structure (the input's by default)."""
    result = np.asarray(f(oct_to_ten(grid, backend=backend)))
    structure = out_structure if out_structure is not None else grid.structure
    return ten_to_oct(result, structure, pool, backend=backend)


def same_structure(a, b) -> bool:
    """True when both grids (or structures) share dims and all split masks."""
    sa = a.structure if isinstance(a, GridOctree) else a
    sb = b.structure if isinstance(b, GridOctree) else b
    return sa.dims == sb.dims and sa.trees == sb.trees
