"""Node numbering, payload indexing and split-mask encoding.

The oracle here is deliberately dumb: list every valid leaf in ascending
node order by checking split bits and ancestor reachability directly, and
expect data_index to equal the position in that list.
"""

import numpy as np
import pytest

from octgrid.tree import (BRANCH, NODE_COUNT, SPLIT_BITS, TREE_BYTES, LeafCell, TreeBits,
                          child, data_index, enumerate_leaves, node_count, node_depth,
                          node_extent, num_leaves, parent, split_bit_count, voxel_depth)


def leaf_nodes_in_order(mask: int, b: int = 8) -> list[int]:
    """Every leaf of the mask, ascending: not split, all ancestors split."""
    nbits = 1 + b + b * b
    leaves = []
    for i in range(nbits + b ** 3):
        if i < nbits and (mask >> i) & 1:
            continue
        j, reachable = i, True
        while j > 0:
            j = (j - 1) // b
            if not (mask >> j) & 1:
                reachable = False
                break
        if reachable:
            leaves.append(i)
    return leaves


def random_mask(rng: np.random.Generator, p=(0.8, 0.5, 0.4)) -> int:
    mask = 0
    if rng.random() < p[0]:
        mask |= 1
        for o1 in range(8):
            if rng.random() < p[1]:
                mask |= 1 << (1 + o1)
                for o2 in range(8):
                    if rng.random() < p[2]:
                        mask |= 1 << (9 + 8 * o1 + o2)
    return mask


def test_parent_child_examples():
    assert parent(1, 8) == 0
    assert parent(72, 8) == 8
    assert parent(51, 4) == 12
    assert child(0, 8) == 1
    assert child(12, 4) == 49
    for k in range(1, NODE_COUNT):
        first = child(parent(k), 8)
        assert first <= k < first + 8
    with pytest.raises(ValueError):
        parent(0)


def test_layout_constants():
    assert split_bit_count(8) == SPLIT_BITS == 73
    assert node_count(8) == NODE_COUNT == 585
    assert split_bit_count(4) == 21
    assert node_count(4) == 85
    assert node_depth(0) == 0
    assert node_depth(8) == 1
    assert node_depth(9) == 2
    assert node_depth(72) == 2
    assert node_depth(73) == 3
    assert node_depth(584) == 3


def test_quadtree_worked_example():
    # bit i of the mask is the i-th character of this string
    bits = "1 0101 0000 1001 0000 0100".replace(" ", "")
    mask = sum(1 << i for i, c in enumerate(bits) if c == "1")
    assert data_index(mask, 51, branching=4) == 13
    assert leaf_nodes_in_order(mask, b=4).index(51) == 13
    assert num_leaves(mask, branching=4) == 1 + 3 * 6
    for pos, leaf in enumerate(leaf_nodes_in_order(mask, b=4)):
        assert data_index(mask, leaf, branching=4) == pos


def test_data_index_small_cases():
    assert data_index(0, 0) == 0
    for i in range(1, 9):
        assert data_index(1, i) == i - 1
    with pytest.raises(ValueError):
        data_index(1, 0)  # the root of a split tree is not a leaf
    with pytest.raises(ValueError):
        data_index(0, 1)  # unreachable below an unsplit root
    with pytest.raises(ValueError):
        data_index(0, NODE_COUNT)


def test_data_index_random_bijection():
    rng = np.random.default_rng(20240811)
    for _ in range(1000):
        mask = random_mask(rng)
        leaves = leaf_nodes_in_order(mask)
        assert len(leaves) == num_leaves(mask)
        got = [data_index(mask, leaf) for leaf in leaves]
        assert got == list(range(len(leaves)))


def test_num_leaves_examples():
    assert num_leaves(0) == 1
    assert num_leaves(1) == 8
    assert num_leaves(TreeBits.FULL) == 512
    rng = np.random.default_rng(3)
    for _ in range(50):
        mask = random_mask(rng)
        assert num_leaves(mask) == 1 + 7 * bin(mask).count("1")


def test_voxel_depth_examples():
    empty = TreeBits.EMPTY
    for x, y, z in ((0, 0, 0), (7, 7, 7), (3, 5, 1)):
        assert voxel_depth(empty, x, y, z) == (0, 0)
    root_only = TreeBits(1)
    assert voxel_depth(root_only, 7, 7, 7) == (1, 8)
    assert voxel_depth(root_only, 0, 0, 0) == (1, 1)
    assert voxel_depth(root_only, 4, 0, 0) == (1, 2)  # x picks the low octant bit
    full = TreeBits.FULL
    for x, y, z in ((0, 0, 0), (7, 7, 7), (2, 6, 5)):
        depth, node = voxel_depth(full, x, y, z)
        assert depth == 3 and node >= 73
    with pytest.raises(ValueError):
        voxel_depth(empty, 8, 0, 0)


def test_voxel_depth_matches_leaf_extent():
    rng = np.random.default_rng(4)
    for _ in range(50):
        tree = TreeBits(random_mask(rng))
        cells = {c.node: c for c in enumerate_leaves(tree)}
        for _ in range(20):
            x, y, z = (int(v) for v in rng.integers(0, 8, size=3))
            depth, node = voxel_depth(tree, x, y, z)
            cell = cells[node]
            assert cell.size == 8 >> depth
            ox, oy, oz = cell.origin
            assert ox <= x < ox + cell.size
            assert oy <= y < oy + cell.size
            assert oz <= z < oz + cell.size


def test_node_extent_examples():
    assert node_extent(0) == ((0, 0, 0), 8)
    assert node_extent(1) == ((0, 0, 0), 4)
    assert node_extent(2) == ((4, 0, 0), 4)
    assert node_extent(8) == ((4, 4, 4), 4)
    assert node_extent(73) == ((0, 0, 0), 1)
    assert node_extent(584) == ((7, 7, 7), 1)
    for i in range(NODE_COUNT):
        (x, y, z), size = node_extent(i)
        assert size == 8 >> node_depth(i)
        assert x % size == y % size == z % size == 0
        assert 0 <= x < 8 and 0 <= y < 8 and 0 <= z < 8


def test_fully_split_offsets_are_bit_interleaved():
    # descend level by level: each octant digit packs (zbit, ybit, xbit)
    full = TreeBits.FULL
    for x in range(8):
        for y in range(8):
            for z in range(8):
                digits = [4 * ((z >> s) & 1) + 2 * ((y >> s) & 1) + ((x >> s) & 1)
                          for s in (2, 1, 0)]
                expected = 64 * digits[0] + 8 * digits[1] + digits[2]
                _, node = voxel_depth(full, x, y, z)
                assert data_index(full, node) == expected
    # spot value: (2, 0, 0) sits in the second 2x2x2 block, not at offset 2
    _, node = voxel_depth(full, 2, 0, 0)
    assert data_index(full, node) == 8


def test_enumerate_leaves_examples():
    assert enumerate_leaves(TreeBits.EMPTY) == [LeafCell(0, (0, 0, 0), 8, 0)]
    cells = enumerate_leaves(TreeBits(1))
    assert [c.node for c in cells] == list(range(1, 9))
    assert [c.data_offset for c in cells] == list(range(8))
    assert all(c.size == 4 for c in cells)
    assert len(enumerate_leaves(TreeBits.FULL)) == 512


def test_enumerate_leaves_tiles_and_matches_data_index():
    rng = np.random.default_rng(5)
    for _ in range(100):
        tree = TreeBits(random_mask(rng))
        cells = enumerate_leaves(tree)
        assert len(cells) == num_leaves(tree)
        assert [c.node for c in cells] == sorted(c.node for c in cells)
        cover = np.zeros((8, 8, 8), dtype=np.int32)
        for c in cells:
            assert data_index(tree, c.node) == c.data_offset
            x, y, z = c.origin
            cover[x:x + c.size, y:y + c.size, z:z + c.size] += 1
        assert (cover == 1).all()


def test_treebits_roundtrip_and_bit_layout():
    rng = np.random.default_rng(6)
    for _ in range(200):
        tree = TreeBits(random_mask(rng))
        raw = tree.to_bytes()
        assert len(raw) == TREE_BYTES
        assert TreeBits.from_bytes(raw) == tree
    # bit i lands in byte i//8 at position i%8
    assert TreeBits(1).to_bytes()[0] == 0x01
    assert TreeBits.from_set_bits([0, 7]).to_bytes()[0] == 0x81
    path_to_72 = TreeBits.from_set_bits([0, 8, 72])
    assert path_to_72.to_bytes()[9] == 0x01
    assert path_to_72.popcount == 3


def test_treebits_validation():
    with pytest.raises(ValueError):
        TreeBits(1 << SPLIT_BITS)
    with pytest.raises(ValueError):
        TreeBits(-1)
    with pytest.raises(ValueError):
        TreeBits(2)  # depth-1 split without the root
    with pytest.raises(ValueError):
        TreeBits.from_set_bits([0, 9])  # depth-2 split under an unsplit parent
    TreeBits.from_set_bits([0, 1, 9])  # a full path is fine
    with pytest.raises(ValueError):
        TreeBits.from_bytes(b"\x00" * 9)
    with pytest.raises(ValueError):
        TreeBits.from_bytes(b"\x00" * 9 + b"\x02")  # padding bit 73
    with pytest.raises(ValueError):
        TreeBits.EMPTY.bit(SPLIT_BITS)


def test_treebits_equality_and_hash():
    a = TreeBits.from_set_bits([0, 3])
    b = TreeBits.from_set_bits([0, 3])
    assert a == b and hash(a) == hash(b)
    assert a != TreeBits.EMPTY
    assert len({a, b, TreeBits.EMPTY}) == 2
    assert BRANCH == 8
