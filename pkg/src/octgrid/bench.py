"""Memory accounting and operation benchmarks.

The memory model counts 10 bytes of structure per tree plus 4 bytes per
stored float, against 4 bytes per voxel per channel for the dense layout.
Benchmarks time the convolution routes on synthetic shell occupancies and
report wall time, the operation cost model and a payload checksum.
"""

from __future__ import annotations

import csv
import io
import time
import zlib
from dataclasses import dataclass

import numpy as np

from . import backend as _backend
from .dense import ConvKernel, dense_conv
from .grid import GridOctree, Pool, oct_to_ten, ten_to_oct
from .ops import OpStats, conv_efficient, conv_naive
from .synth import empty_structure, random_kernel, shell_occupancy
from .builder import structure_from_dense
from .tree import TREE_BYTES

__all__ = [
    "MemoryReport",
    "BenchRecord",
    "BENCH_COLUMNS",
    "memory_report",
    "octree_bytes",
    "dense_bytes",
    "leaf_sizes_per_row",
    "occupied_voxels",
    "checksum",
    "run_bench",
    "records_to_csv",
]


@dataclass(frozen=True)
class MemoryReport:
    """Size of one grid under the octree and dense layouts."""

    resolution: tuple[int, int, int]
    channels: int
    occupancy: float
    octree_bytes: int
    dense_bytes: int
    compression_ratio: float

    def to_dict(self) -> dict:
        return {
            "resolution": list(self.resolution),
            "channels": self.channels,
            "occupancy": self.occupancy,
            "octree_bytes": self.octree_bytes,
            "dense_bytes": self.dense_bytes,
            "compression_ratio": self.compression_ratio,
        }


def octree_bytes(grid: GridOctree) -> int:
    return grid.n_trees * TREE_BYTES + 4 * grid.data.size


def dense_bytes(grid: GridOctree) -> int:
    x, y, z = grid.resolution
    return 4 * grid.channels * x * y * z


def leaf_sizes_per_row(grid: GridOctree) -> np.ndarray:
    """Edge length of the leaf behind each payload row.

    Rows within a tree are ordered by ascending node index, so sizes run
    8 (lone root leaf) or 4s, then 2s, then 1s.
    """
    bits, _, _ = grid.packed()
    b0 = bits[:, 0].astype(np.int64)
    pc1 = bits[:, 1:9].sum(axis=1, dtype=np.int64)
    pc2 = bits[:, 9:73].sum(axis=1, dtype=np.int64)
    counts = np.stack([1 - b0, 8 * b0 - pc1, 8 * pc1 - pc2, 8 * pc2], axis=1)
    return np.repeat(np.tile([8, 4, 2, 1], grid.n_trees), counts.ravel())


def occupied_voxels(grid: GridOctree) -> int:
    """Finest voxels whose leaf stores any non-zero channel."""
    nonzero = np.any(grid.data != 0, axis=1)
    sizes = leaf_sizes_per_row(grid)
    return int((sizes[nonzero] ** 3).sum())


def memory_report(grid: GridOctree) -> MemoryReport:
    x, y, z = grid.resolution
    ob = octree_bytes(grid)
    db = dense_bytes(grid)
    return MemoryReport(
        resolution=(x, y, z),
        channels=grid.channels,
        occupancy=occupied_voxels(grid) / (x * y * z),
        octree_bytes=ob,
        dense_bytes=db,
        compression_ratio=db / ob,
    )


def checksum(values: np.ndarray) -> str:
    """crc32 of the float32 payload bytes, stable across runs."""
    return f"{zlib.crc32(np.ascontiguousarray(values, dtype='<f4').tobytes()):08x}"


@dataclass(frozen=True)
class BenchRecord:
    op: str
    backend: str
    resolution: int
    pattern: str
    occupancy: float
    reps: int
    threads: int
    wall_time_s: float
    stats: OpStats
    mult_ratio: float  # multiplications relative to conv_naive on the same grid
    checksum: str


BENCH_COLUMNS = [
    "op",
    "backend",
    "resolution",
    "pattern",
    "occupancy",
    "reps",
    "threads",
    "wall_time_s",
    "multiplications",
    "cells_visited",
    "boundary_voxels_evaluated",
    "mult_ratio",
    "checksum",
]


def _time_reps(fn, reps: int) -> tuple[float, object]:
    best = None
    result = None
    for _ in range(reps):
        start = time.perf_counter()
        result = fn()
        elapsed = time.perf_counter() - start
        best = elapsed if best is None else min(best, elapsed)
    return best, result


def _bench_grid(grid: GridOctree, kernel: ConvKernel, resolution: int, pattern: str,
                occupancy: float, reps: int, threads: int, backends: list[str]) -> list[BenchRecord]:
    rows = []
    naive_mults = None
    for name in backends:
        for op, fn in (("conv_naive", conv_naive), ("conv_efficient", conv_efficient)):
            elapsed, (result, stats) = _time_reps(
                lambda fn=fn: fn(grid, kernel, Pool.AVG, threads=threads, backend=name), reps)
            if op == "conv_naive":
                naive_mults = stats.multiplications
            rows.append((op, name, elapsed, stats, checksum(result.data)))
    dense_in = oct_to_ten(grid)
    elapsed, result = _time_reps(lambda: dense_conv(dense_in, kernel), reps)
    voxels = dense_in[0].size
    k = int(np.prod(kernel.taps))
    dense_stats = OpStats(
        multiplications=voxels * k * kernel.in_channels * kernel.out_channels,
        cells_visited=voxels,
        boundary_voxels_evaluated=0,
    )
    rows.append(("dense_conv", "dense", elapsed, dense_stats, checksum(result)))
    if naive_mults is None:
        naive_mults = dense_stats.multiplications
    return [BenchRecord(op, name, resolution, pattern, occupancy, reps, threads, elapsed,
                        stats, stats.multiplications / naive_mults, csum)
            for op, name, elapsed, stats, csum in rows]


def run_bench(resolutions: list[int], occupancies: list[float], reps: int, seed: int,
              threads: int = 1, channels: int = 1,
              backends: list[str] | None = None) -> list[BenchRecord]:
    """Benchmark both conv routes (on every available backend) plus the
    dense reference on shell occupancies, prefixed by the isolated single
    8^3 cell micro-case."""
    if backends is None:
        backends = list(_backend.available())
    rng = np.random.default_rng(seed)
    kernel = random_kernel(rng, channels, channels, 3)
    records = []

    micro = GridOctree(empty_structure((1, 1, 1)),
                       rng.standard_normal((1, channels)).astype(np.float32))
    records.extend(_bench_grid(micro, kernel, 8, "isolated-cell", 0.0, reps, threads, backends))

    for resolution in resolutions:
        for frac in occupancies:
            occ = shell_occupancy(resolution, frac)
            structure = structure_from_dense(occ)
            values = rng.standard_normal((structure.num_values(), channels)).astype(np.float32)
            values *= ten_to_oct(occ[None].astype(np.float32), structure, Pool.MAX).data
            grid = GridOctree(structure, values)
            actual = occ.sum() / occ.size
            records.extend(_bench_grid(grid, kernel, resolution, "shell", actual,
                                       reps, threads, backends))
    return records


def records_to_csv(records: list[BenchRecord]) -> str:
    """CSV rendering of bench records (column set v1)."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(BENCH_COLUMNS)
    for r in records:
        writer.writerow([
            r.op, r.backend, r.resolution, r.pattern, f"{r.occupancy:.6f}", r.reps, r.threads,
            f"{r.wall_time_s:.6f}", r.stats.multiplications, r.stats.cells_visited,
            r.stats.boundary_voxels_evaluated, f"{r.mult_ratio:.4f}", r.checksum,
        ])
    return buf.getvalue()
