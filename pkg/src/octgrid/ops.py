"""Network-style operations on grid-octrees.

All operations keep values in float32 and derive the output structure from
the input structure alone, never from values.  Convolution comes in two
routes with identical semantics: ``conv_naive`` evaluates the kernel at
every voxel of every cell, ``conv_efficient`` shares the constant in-cell
work of large cells and only evaluates boundary voxels explicitly.  Both
report an ``OpStats`` with the multiplication count of their evaluation
strategy, which depends only on structure, kernel shape and channel counts.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import backend as _backend
from .dense import ConvKernel
from .grid import _POOL_CODE, GridOctree, GridStructure, Pool, oct_to_ten, pack_structure
from .tree import TreeBits, data_index, enumerate_leaves

__all__ = [
    "OpStats",
    "conv_naive",
    "conv_efficient",
    "pool2",
    "unpool2",
    "unpool2_guided",
    "pointwise",
    "concat",
]

_MAX_TAPS = 1331  # guard matching the compiled kernels' tap buffer


@dataclass(frozen=True)
class OpStats:
    """Cost model of one structured operation.

    ``multiplications`` counts kernel-tap multiplies (bias adds excluded),
    ``cells_visited`` the leaf cells processed, and
    ``boundary_voxels_evaluated`` the voxels whose kernel support crosses
    their cell boundary.  ``naive_fallback`` flags an efficient-path call
    that had to run the naive evaluation (non-3x3x3 kernel).
    """

    multiplications: int
    cells_visited: int
    boundary_voxels_evaluated: int
    naive_fallback: bool = False


def _leaf_size_counts(structure: GridStructure, bits: np.ndarray) -> dict[int, int]:
    """Number of leaves of each edge length (8, 4, 2, 1) across all trees."""
    b0 = bits[:, 0].astype(np.int64)
    pc1 = bits[:, 1:9].sum(axis=1, dtype=np.int64)
    pc2 = bits[:, 9:73].sum(axis=1, dtype=np.int64)
    return {
        8: int((1 - b0).sum()),
        4: int((8 * b0 - pc1).sum()),
        2: int((8 * pc1 - pc2).sum()),
        1: int((8 * pc2).sum()),
    }


def _boundary_voxels(size: int, taps: tuple[int, int, int]) -> int:
    inner = 1
    for r in (t // 2 for t in taps):
        inner *= max(0, size - 2 * r)
    return size ** 3 - inner


def _conv_stats(structure: GridStructure, bits: np.ndarray, kernel: ConvKernel, efficient: bool) -> OpStats:
    counts = _leaf_size_counts(structure, bits)
    taps = kernel.taps
    k = taps[0] * taps[1] * taps[2]
    pairs = kernel.in_channels * kernel.out_channels
    cells = sum(counts.values())
    boundary = sum(n * _boundary_voxels(s, taps) for s, n in counts.items())
    use_efficient = efficient and taps == (3, 3, 3)
    if use_efficient:
        mults = 0
        for s, n in counts.items():
            if s <= 2:
                mults += n * s ** 3 * k
            else:
                # One full in-cell kernel evaluation per cell; boundary
                # voxels only pay for their out-of-cell taps.
                mults += n * (k + k * s ** 3 - (3 * s - 2) ** 3)
    else:
        mults = structure.n_trees * 512 * k
    return OpStats(
        multiplications=mults * pairs,
        cells_visited=cells,
        boundary_voxels_evaluated=boundary,
        naive_fallback=efficient and not use_efficient,
    )


def _run_conv(grid: GridOctree, kernel: ConvKernel, pool, threads: int, backend: str | None, efficient: bool):
    pool = Pool.coerce(pool)
    if grid.channels != kernel.in_channels:
        raise ValueError(f"grid has {grid.channels} channels, kernel expects {kernel.in_channels}")
    taps = kernel.taps
    if taps[0] * taps[1] * taps[2] > _MAX_TAPS:
        raise ValueError(f"kernel {taps} exceeds the supported tap count")
    kern = _backend.get(backend)
    bits, prefix, base = grid.packed()
    d, h, w = grid.dims
    w64 = np.ascontiguousarray(kernel.weights, dtype=np.float64)
    b64 = np.ascontiguousarray(kernel.bias, dtype=np.float64)
    out = np.empty((grid.data.shape[0], kernel.out_channels), dtype=np.float32)
    fn = kern.conv_efficient_values if efficient and taps == (3, 3, 3) else kern.conv_naive_values
    code = _POOL_CODE[pool]
    n = grid.n_trees
    if threads > 1 and kern is not _backend.get("python") and n > 1:
        workers = min(threads, n)
        bounds = np.linspace(0, n, workers + 1).astype(int)
        with ThreadPoolExecutor(max_workers=workers) as ex:
            futures = [
                ex.submit(fn, bits, prefix, base, grid.data, d, h, w, w64, b64, code, out, int(t0), int(t1))
                for t0, t1 in zip(bounds[:-1], bounds[1:])
                if t1 > t0
            ]
            for f in futures:
                f.result()
    else:
        fn(bits, prefix, base, grid.data, d, h, w, w64, b64, code, out, 0, n)
    stats = _conv_stats(grid.structure, bits, kernel, efficient)
    return GridOctree(grid.structure, out), stats


def conv_naive(grid: GridOctree, kernel: ConvKernel, pool, threads: int = 1,
               backend: str | None = None) -> tuple[GridOctree, OpStats]:
    """Convolve by evaluating the kernel at every voxel of every cell, then
    pooling each cell's responses.  Output structure equals the input's."""
    return _run_conv(grid, kernel, pool, threads, backend, efficient=False)


def conv_efficient(grid: GridOctree, kernel: ConvKernel, pool, threads: int = 1,
                   backend: str | None = None) -> tuple[GridOctree, OpStats]:
    """Same result as conv_naive, computed with shared in-cell work for
    cells of size 4 and 8.  Kernels other than 3x3x3 fall back to the naive
    evaluation, flagged in the returned stats."""
    return _run_conv(grid, kernel, pool, threads, backend, efficient=True)


def _pool_rows(rows: np.ndarray, pool: Pool) -> np.ndarray:
    if pool is Pool.MAX:
        return rows.max(axis=0)
    acc = np.zeros(rows.shape[1], dtype=np.float64)
    for r in range(rows.shape[0]):
        acc += rows[r]
    return (acc / rows.shape[0]).astype(np.float32)


def pool2(grid: GridOctree, pool) -> GridOctree:
    """Halve the resolution: 2x2x2 tree blocks merge into one tree whose
    root is always split, each input tree shrinking into one root child.
    Leaves below depth 3 keep their value one level deeper; depth-3 sibling
    groups pool into a single depth-3 leaf."""
    pool = Pool.coerce(pool)
    d2, h2, w2 = grid.dims
    if d2 % 2 or h2 % 2 or w2 % 2:
        raise ValueError(f"pool2 needs even grid dims, got {grid.dims}")
    d, h, w = d2 // 2, h2 // 2, w2 // 2
    in_trees = grid.trees
    in_base = grid.tree_base
    data = grid.data

    def input_index(od, oh, ow, c0):
        pd, ph, pw = c0 & 1, (c0 >> 1) & 1, (c0 >> 2) & 1
        return ((2 * od + pd) * h2 + (2 * oh + ph)) * w2 + (2 * ow + pw)

    out_trees = []
    for od in range(d):
        for oh in range(h):
            for ow in range(w):
                mask = 1
                for c0 in range(8):
                    tin = in_trees[input_index(od, oh, ow, c0)]
                    if tin.bit(0):
                        mask |= 1 << (1 + c0)
                        for o1 in range(8):
                            if tin.bit(1 + o1):
                                mask |= 1 << (9 + 8 * c0 + o1)
                out_trees.append(TreeBits(mask))
    structure = GridStructure((d, h, w), tuple(out_trees))
    _, _, out_base = pack_structure(structure)
    out = np.empty((structure.num_values(), grid.channels), dtype=np.float32)
    to = 0
    for od in range(d):
        for oh in range(h):
            for ow in range(w):
                tree_out = out_trees[to]
                bo = int(out_base[to])
                for c0 in range(8):
                    ti = input_index(od, oh, ow, c0)
                    tin = in_trees[ti]
                    bi = int(in_base[ti])
                    if not tin.bit(0):
                        out[bo + data_index(tree_out, 1 + c0)] = data[bi]
                        continue
                    for o1 in range(8):
                        if not tin.bit(1 + o1):
                            out[bo + data_index(tree_out, 9 + 8 * c0 + o1)] = data[bi + data_index(tin, 1 + o1)]
                            continue
                        for o2 in range(8):
                            n_out = 73 + 64 * c0 + 8 * o1 + o2
                            n_in = 9 + 8 * o1 + o2
                            if not tin.bit(n_in):
                                out[bo + data_index(tree_out, n_out)] = data[bi + data_index(tin, n_in)]
                            else:
                                first = bi + data_index(tin, 73 + 64 * o1 + 8 * o2)
                                out[bo + data_index(tree_out, n_out)] = _pool_rows(data[first:first + 8], pool)
                to += 1
    return GridOctree(structure, out)


def unpool2(grid: GridOctree) -> GridOctree:
    """Double the resolution: each root child of an input tree becomes one
    output tree, every cell doubling in size (depths shift up by one).
    Values replicate nearest-neighbour."""
    d, h, w = grid.dims
    d2, h2, w2 = 2 * d, 2 * h, 2 * w
    in_base = grid.tree_base
    data = grid.data
    out_trees: list[TreeBits | None] = [None] * (d2 * h2 * w2)
    sources = []
    for td in range(d):
        for th in range(h):
            for tw in range(w):
                ti = (td * h + th) * w + tw
                tin = grid.trees[ti]
                for c0 in range(8):
                    od, oh, ow = 2 * td + (c0 & 1), 2 * th + ((c0 >> 1) & 1), 2 * tw + ((c0 >> 2) & 1)
                    to = (od * h2 + oh) * w2 + ow
                    mask = 0
                    if tin.bit(0) and tin.bit(1 + c0):
                        mask |= 1
                        for o2 in range(8):
                            if tin.bit(9 + 8 * c0 + o2):
                                mask |= 1 << (1 + o2)
                    out_trees[to] = TreeBits(mask)
                    sources.append((to, ti, c0))
    structure = GridStructure((d2, h2, w2), tuple(out_trees))
    _, _, out_base = pack_structure(structure)
    out = np.empty((structure.num_values(), grid.channels), dtype=np.float32)
    for to, ti, c0 in sources:
        tin = grid.trees[ti]
        tout = structure.trees[to]
        bo = int(out_base[to])
        bi = int(in_base[ti])
        if not tin.bit(0):
            out[bo] = data[bi]
        elif not tin.bit(1 + c0):
            out[bo] = data[bi + data_index(tin, 1 + c0)]
        else:
            for o2 in range(8):
                n_in = 9 + 8 * c0 + o2
                if not tin.bit(n_in):
                    out[bo + data_index(tout, 1 + o2)] = data[bi + data_index(tin, n_in)]
                else:
                    first = bi + data_index(tin, 73 + 64 * c0 + 8 * o2)
                    dst = bo + data_index(tout, 9 + 8 * o2)
                    out[dst:dst + 8] = data[first:first + 8]
    return GridOctree(structure, out)


def unpool2_guided(grid: GridOctree, guide: GridStructure, backend: str | None = None) -> GridOctree:
    """Upsample like unpool2 but onto a caller-supplied structure.  Every
    output leaf reads the input value at half its origin coordinates, so
    where the guide is finer than the plain unpool2 structure the parent
    value replicates down."""
    d, h, w = grid.dims
    if guide.dims != (2 * d, 2 * h, 2 * w):
        raise ValueError(f"guide dims {guide.dims} must double the input dims {grid.dims}")
    _, _, out_base = pack_structure(guide)
    dense_in = oct_to_ten(grid, backend=backend)
    out = np.empty((int(out_base[-1]), grid.channels), dtype=np.float32)
    gh, gw = guide.dims[1], guide.dims[2]
    for to, tree in enumerate(guide.trees):
        td, th, tw = to // (gh * gw), (to // gw) % gh, to % gw
        cells = enumerate_leaves(tree)
        oi = np.array([(8 * td + c.origin[0]) >> 1 for c in cells])
        oj = np.array([(8 * th + c.origin[1]) >> 1 for c in cells])
        ok = np.array([(8 * tw + c.origin[2]) >> 1 for c in cells])
        bo = int(out_base[to])
        out[bo:bo + len(cells)] = dense_in[:, oi, oj, ok].T
    return GridOctree(guide, out)


def pointwise(grid: GridOctree, fn: Callable[[np.ndarray], np.ndarray]) -> GridOctree:
    """Map every stored value through an elementwise function; structure is
    unchanged."""
    values = np.asarray(fn(np.array(grid.data)))
    if values.shape != grid.data.shape:
        raise ValueError(f"pointwise fn changed value shape {grid.data.shape} -> {values.shape}")
    return GridOctree(grid.structure, values.astype(np.float32))


def concat(a: GridOctree, b: GridOctree) -> GridOctree:
    """Concatenate channels of two grids with identical structure."""
    from .grid import same_structure

    if not same_structure(a, b):
        raise ValueError("concat requires identical structure")
    return GridOctree(a.structure, np.concatenate([a.data, b.data], axis=1))
