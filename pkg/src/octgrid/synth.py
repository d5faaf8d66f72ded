"""Deterministic synthesis of structures, grids and occupancy patterns for
self-checks and benchmarks.  Everything is driven by a caller-supplied
numpy Generator, so a fixed seed reproduces bit-identical inputs."""

from __future__ import annotations

import numpy as np

from .dense import ConvKernel
from .grid import GridOctree, GridStructure
from .tree import TreeBits

__all__ = [
    "empty_structure",
    "fully_split_structure",
    "random_structure",
    "refine_structure",
    "random_grid",
    "random_kernel",
    "shell_occupancy",
]


def empty_structure(dims: tuple[int, int, int]) -> GridStructure:
    d, h, w = dims
    return GridStructure(dims, (TreeBits.EMPTY,) * (d * h * w))


def fully_split_structure(dims: tuple[int, int, int]) -> GridStructure:
    d, h, w = dims
    return GridStructure(dims, (TreeBits.FULL,) * (d * h * w))


def _trees_from_bits(b0: np.ndarray, d1: np.ndarray, d2: np.ndarray) -> tuple[TreeBits, ...]:
    rows = np.concatenate([b0[:, None], d1, d2], axis=1).astype(np.uint8)
    packed = np.packbits(rows, axis=1, bitorder="little")
    return tuple(TreeBits.from_bytes(packed[t].tobytes()) for t in range(len(rows)))


def random_structure(rng: np.random.Generator, dims: tuple[int, int, int],
                     p_split: tuple[float, float, float] = (0.7, 0.5, 0.3)) -> GridStructure:
    """Independent split decisions per node, children gated on the parent."""
    d, h, w = dims
    n = d * h * w
    p0, p1, p2 = p_split
    b0 = rng.random(n) < p0
    d1 = (rng.random((n, 8)) < p1) & b0[:, None]
    d2 = (rng.random((n, 64)) < p2) & np.repeat(d1, 8, axis=1)
    return GridStructure(dims, _trees_from_bits(b0, d1, d2))


def refine_structure(rng: np.random.Generator, structure: GridStructure,
                     p_extra: float = 0.3) -> GridStructure:
    """Random superset of a structure: additional valid splits at every
    level.  Used to build guides for guided unpooling."""
    n = structure.n_trees
    masks = np.array([t.mask for t in structure.trees], dtype=object)
    b0 = np.array([bool(m & 1) for m in masks])
    d1 = np.array([[(int(m) >> (1 + i)) & 1 for i in range(8)] for m in masks], dtype=bool)
    d2 = np.array([[(int(m) >> (9 + i)) & 1 for i in range(64)] for m in masks], dtype=bool)
    b0 |= rng.random(n) < p_extra
    d1 = (d1 | (rng.random((n, 8)) < p_extra)) & b0[:, None]
    d2 = (d2 | (rng.random((n, 64)) < p_extra)) & np.repeat(d1, 8, axis=1)
    return GridStructure(structure.dims, _trees_from_bits(b0, d1, d2))


def random_grid(rng: np.random.Generator, dims: tuple[int, int, int], channels: int,
                p_split: tuple[float, float, float] = (0.7, 0.5, 0.3)) -> GridOctree:
    structure = random_structure(rng, dims, p_split)
    data = rng.standard_normal((structure.num_values(), channels)).astype(np.float32)
    return GridOctree(structure, data)


def random_kernel(rng: np.random.Generator, out_channels: int, in_channels: int,
                  size: int | tuple[int, int, int] = 3) -> ConvKernel:
    if isinstance(size, int):
        size = (size, size, size)
    weights = rng.standard_normal((out_channels, in_channels) + size).astype(np.float32)
    bias = rng.standard_normal(out_channels).astype(np.float32)
    return ConvKernel(weights, bias)


def shell_occupancy(resolution: int, fraction: float) -> np.ndarray:
    """Deterministic surface-shell pattern at a target occupancy fraction.

    Voxels closest to a centred sphere of radius 0.35 * resolution are set
    first, so low fractions give a hollow shell and higher fractions a
    progressively thicker one.  Ties break by voxel index.
    """
    if not 0.0 <= fraction <= 1.0:
        raise ValueError(f"occupancy fraction must lie in [0, 1], got {fraction}")
    n = resolution
    target = int(round(fraction * n ** 3))
    occ = np.zeros(n ** 3, dtype=bool)
    if target:
        axis = np.arange(n) - (n - 1) / 2.0
        dist = np.sqrt(
            axis[:, None, None] ** 2 + axis[None, :, None] ** 2 + axis[None, None, :] ** 2
        ).ravel()
        key = np.abs(dist - 0.35 * n)
        order = np.lexsort((np.arange(n ** 3), key))
        occ[order[:target]] = True
    return occ.reshape(n, n, n)
