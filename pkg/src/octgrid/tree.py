"""Shallow octree over an 8x8x8 voxel block, encoded as a 73-bit split mask.

A tree subdivides at most three times.  Nodes carry breadth-first indices:
the root is node 0 and the children of node ``i`` are ``8*i + 1 .. 8*i + 8``.
One bit per interior node records whether that node is split:

* bit 0          -- root (depth 0)
* bits 1 .. 8    -- depth-1 nodes
* bits 9 .. 72   -- depth-2 nodes

Depth-3 nodes (indices 73 .. 584) are single voxels and always leaves, so
they need no bits.  A set bit is only meaningful when the parent is split;
masks with orphan splits are rejected at construction.

Child octants inside a node are numbered ``4*zbit + 2*ybit + xbit`` where
``xbit`` is 1 when the local x coordinate falls in the upper half of the
node, and likewise for y and z.  Local x runs along the first grid axis.

Leaf payloads live in a flat per-tree array ordered by ``data_index``,
which counts leaves in bit order.  The index arithmetic is generic over the
branching factor ``b`` (8 for octrees, 4 for quadtrees) so the same code
path serves both.
"""

from __future__ import annotations

from dataclasses import dataclass

__all__ = [
    "BRANCH",
    "SPLIT_BITS",
    "NODE_COUNT",
    "TREE_BYTES",
    "TreeBits",
    "LeafCell",
    "parent",
    "child",
    "node_depth",
    "node_extent",
    "split_bit_count",
    "node_count",
    "data_index",
    "num_leaves",
    "voxel_depth",
    "enumerate_leaves",
]

BRANCH = 8
SPLIT_BITS = 73  # 1 + 8 + 64
NODE_COUNT = 585  # 1 + 8 + 64 + 512
TREE_BYTES = 10


def split_bit_count(branching: int = BRANCH) -> int:
    """Number of split bits for a depth-3 tree: interior levels 0, 1 and 2."""
    return 1 + branching + branching * branching


def node_count(branching: int = BRANCH) -> int:
    return split_bit_count(branching) + branching ** 3


def parent(i: int, branching: int = BRANCH) -> int:
    """Breadth-first index of the parent of node ``i``."""
    if i <= 0:
        raise ValueError("the root node has no parent")
    return (i - 1) // branching


def child(i: int, branching: int = BRANCH) -> int:
    """Breadth-first index of the first child of node ``i``."""
    return branching * i + 1


def node_depth(i: int, branching: int = BRANCH) -> int:
    if i < 0 or i >= node_count(branching):
        raise ValueError(f"node index {i} out of range")
    if i == 0:
        return 0
    if i <= branching:
        return 1
    if i < split_bit_count(branching):
        return 2
    return 3


def _mask_of(tree) -> int:
    if isinstance(tree, TreeBits):
        return tree.mask
    return int(tree)


def _check_leaf(mask: int, i: int, branching: int) -> None:
    nbits = 1 + branching + branching * branching
    if i < 0 or i >= nbits + branching ** 3:
        raise ValueError(f"node index {i} out of range")
    if i < nbits and (mask >> i) & 1:
        raise ValueError(f"node {i} is split, not a leaf")
    j = i
    while j > 0:
        j = (j - 1) // branching
        if not (mask >> j) & 1:
            raise ValueError(f"node {i} is unreachable: ancestor {j} is not split")


def data_index(tree, i: int, branching: int = BRANCH) -> int:
    """Position of leaf node ``i`` in the per-tree payload array.

    Counts the nodes allocated before ``i`` (children of split nodes with a
    smaller parent index, plus the root) and subtracts the ones that are
    themselves split, then adds the offset of ``i`` among its siblings.
    """
    mask = _mask_of(tree)
    _check_leaf(mask, i, branching)
    if i == 0:
        return 0
    nbits = 1 + branching + branching * branching
    pa = (i - 1) // branching
    nodes_above = branching * (mask & ((1 << pa) - 1)).bit_count() + 1
    splits_before = (mask & ((1 << min(i, nbits)) - 1)).bit_count()
    return nodes_above - splits_before + (i - 1) % branching


def num_leaves(tree, branching: int = BRANCH) -> int:
    """Leaf count of a valid tree: each split turns 1 leaf into ``b`` leaves."""
    mask = _mask_of(tree)
    return 1 + (branching - 1) * mask.bit_count()


class TreeBits:
    """Immutable split mask of one shallow octree.

    Wraps a 73-bit integer.  Construction validates that every set bit has a
    split parent, so any ``TreeBits`` instance is a well-formed tree.
    """

    __slots__ = ("_mask",)

    def __init__(self, mask: int = 0):
        mask = int(mask)
        if mask < 0 or mask >> SPLIT_BITS:
            raise ValueError("split mask must fit in 73 bits")
        m = mask & ~1
        while m:
            low = m & -m
            i = low.bit_length() - 1
            if not (mask >> parent(i)) & 1:
                raise ValueError(f"orphan split: bit {i} set but parent {parent(i)} is not split")
            m ^= low
        self._mask = mask

    @property
    def mask(self) -> int:
        return self._mask

    @classmethod
    def from_set_bits(cls, indices) -> "TreeBits":
        mask = 0
        for i in indices:
            if i < 0 or i >= SPLIT_BITS:
                raise ValueError(f"split bit index {i} out of range")
            mask |= 1 << i
        return cls(mask)

    @classmethod
    def from_bytes(cls, raw: bytes) -> "TreeBits":
        """Decode the 10-byte record (bit i at byte i//8, position i%8)."""
        if len(raw) != TREE_BYTES:
            raise ValueError(f"tree record must be {TREE_BYTES} bytes, got {len(raw)}")
        mask = int.from_bytes(raw, "little")
        if mask >> SPLIT_BITS:
            raise ValueError("tree record has padding bits set")
        return cls(mask)

    def to_bytes(self) -> bytes:
        return self._mask.to_bytes(TREE_BYTES, "little")

    def bit(self, i: int) -> bool:
        if i < 0 or i >= SPLIT_BITS:
            raise ValueError(f"split bit index {i} out of range")
        return bool((self._mask >> i) & 1)

    @property
    def popcount(self) -> int:
        return self._mask.bit_count()

    def __eq__(self, other) -> bool:
        return isinstance(other, TreeBits) and other._mask == self._mask

    def __hash__(self) -> int:
        return hash(self._mask)

    def __repr__(self) -> str:
        return f"TreeBits(0x{self._mask:x})"


TreeBits.EMPTY = TreeBits(0)
TreeBits.FULL = TreeBits((1 << SPLIT_BITS) - 1)


def _octant(x: int, y: int, z: int, half: int) -> int:
    return 4 * (z >= half) + 2 * (y >= half) + (x >= half)


def voxel_depth(tree: TreeBits, x: int, y: int, z: int) -> tuple[int, int]:
    """Depth and node index of the leaf containing local voxel (x, y, z)."""
    if not all(0 <= c < 8 for c in (x, y, z)):
        raise ValueError(f"local coordinates ({x}, {y}, {z}) out of range")
    if not tree.bit(0):
        return 0, 0
    o1 = 4 * (z >> 2) + 2 * (y >> 2) + (x >> 2)
    n1 = 1 + o1
    if not tree.bit(n1):
        return 1, n1
    o2 = 4 * ((z >> 1) & 1) + 2 * ((y >> 1) & 1) + ((x >> 1) & 1)
    n2 = child(n1) + o2
    if not tree.bit(n2):
        return 2, n2
    o3 = 4 * (z & 1) + 2 * (y & 1) + (x & 1)
    return 3, child(n2) + o3


def node_extent(i: int) -> tuple[tuple[int, int, int], int]:
    """Local origin and edge length of the cube covered by node ``i``."""
    depth = node_depth(i)
    x = y = z = 0
    if depth >= 1:
        o1 = i if depth == 1 else (i - 9) // 8 + 1 if depth == 2 else (i - 73) // 64 + 1
        o1 -= 1
        x += 4 * (o1 & 1)
        y += 4 * ((o1 >> 1) & 1)
        z += 4 * ((o1 >> 2) & 1)
    if depth >= 2:
        o2 = (i - 9) % 8 if depth == 2 else ((i - 73) // 8) % 8
        x += 2 * (o2 & 1)
        y += 2 * ((o2 >> 1) & 1)
        z += 2 * ((o2 >> 2) & 1)
    if depth == 3:
        o3 = (i - 73) % 8
        x += o3 & 1
        y += (o3 >> 1) & 1
        z += (o3 >> 2) & 1
    return (x, y, z), 8 >> depth


@dataclass(frozen=True)
class LeafCell:
    """One leaf of a tree: node index, local extent and payload position."""

    node: int
    origin: tuple[int, int, int]
    size: int
    data_offset: int


def enumerate_leaves(tree: TreeBits) -> list[LeafCell]:
    """All leaves in payload order (ascending node index, hence ascending
    data_index) tiling the 8x8x8 block exactly."""
    if not tree.bit(0):
        return [LeafCell(0, (0, 0, 0), 8, 0)]
    cells = []
    for o1 in range(8):
        if not tree.bit(1 + o1):
            cells.append(1 + o1)
    for o1 in range(8):
        if tree.bit(1 + o1):
            for o2 in range(8):
                if not tree.bit(9 + 8 * o1 + o2):
                    cells.append(9 + 8 * o1 + o2)
    for o1 in range(8):
        if tree.bit(1 + o1):
            for o2 in range(8):
                if tree.bit(9 + 8 * o1 + o2):
                    base = 73 + 64 * o1 + 8 * o2
                    cells.extend(base + o3 for o3 in range(8))
    out = []
    for offset, node in enumerate(cells):
        origin, size = node_extent(node)
        out.append(LeafCell(node, origin, size, offset))
    return out
