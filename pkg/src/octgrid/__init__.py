"""Sparse 3D voxel grids on a lattice of shallow octrees.

A grid splits its volume into 8x8x8-voxel blocks, each described by a
73-bit split mask and a flat float32 payload holding one value per leaf.
Convolution, pooling and unpooling run directly on that layout, either
through the compiled kernels (``octgrid._kernels``) or a pure numpy
fallback; ``octgrid.backend`` picks whichever is available.
"""

from .backend import HAVE_NATIVE, available, default_name
from .bench import (BenchRecord, MemoryReport, checksum, dense_bytes, leaf_sizes_per_row,
                    memory_report, occupied_voxels, octree_bytes, records_to_csv, run_bench)
from .builder import (Affine, PointSet, TriangleMesh, VoxelizeConfig, build_from_points,
                      fit_transform, structure_from_dense, tri_box_overlap, voxelize_mesh)
from .dense import (ConvKernel, dense_avgpool2, dense_conv, dense_maxpool2, dense_pointwise,
                    dense_unpool2, relu)
from .fileio import (FileFormatError, load_dense, load_grid, read_off, read_xyz, save_dense,
                     save_grid)
from .grid import (GridOctree, GridStructure, Pool, VoxelAddr, get, locate, oct_to_ten,
                   pack_structure, same_structure, ten_to_oct, wrap_dense)
from .ops import (OpStats, concat, conv_efficient, conv_naive, pointwise, pool2, unpool2,
                  unpool2_guided)
from .synth import (empty_structure, fully_split_structure, random_grid, random_kernel,
                    random_structure, refine_structure, shell_occupancy)
from .tree import (BRANCH, NODE_COUNT, SPLIT_BITS, TREE_BYTES, LeafCell, TreeBits, child,
                   data_index, enumerate_leaves, node_depth, node_extent, num_leaves, parent,
                   voxel_depth)
from .verify import run_check

__version__ = "0.1.0"

__all__ = [
    "Affine", "BRANCH", "BenchRecord", "ConvKernel", "FileFormatError", "GridOctree",
    "GridStructure", "HAVE_NATIVE", "LeafCell", "MemoryReport", "NODE_COUNT", "OpStats",
    "PointSet", "Pool", "SPLIT_BITS", "TREE_BYTES", "TreeBits", "TriangleMesh", "VoxelAddr",
    "VoxelizeConfig", "available", "build_from_points", "checksum", "child", "concat",
    "conv_efficient", "conv_naive", "data_index", "default_name", "dense_avgpool2",
    "dense_bytes", "dense_conv", "dense_maxpool2", "dense_pointwise", "dense_unpool2",
    "empty_structure", "enumerate_leaves", "fit_transform", "fully_split_structure", "get",
    "leaf_sizes_per_row", "load_dense", "load_grid", "locate", "memory_report", "node_depth",
    "node_extent", "num_leaves", "occupied_voxels", "oct_to_ten", "octree_bytes",
    "pack_structure", "parent", "pointwise", "pool2", "random_grid", "random_kernel",
    "random_structure", "read_off", "read_xyz", "records_to_csv", "refine_structure", "relu",
    "run_bench", "run_check", "same_structure", "save_dense", "save_grid", "shell_occupancy",
    "structure_from_dense", "ten_to_oct", "tri_box_overlap", "unpool2", "unpool2_guided",
    "voxel_depth", "voxelize_mesh", "wrap_dense",
]
