"""Mesh and point-cloud voxelization against geometric oracles."""

import numpy as np
import pytest

from octgrid.builder import (Affine, PointSet, TriangleMesh, VoxelizeConfig, build_from_points,
                             fit_transform, structure_from_dense, tri_box_overlap, voxelize_mesh)
from octgrid.fileio import save_grid
from octgrid.grid import get, oct_to_ten
from octgrid.tree import TreeBits


def expected_mask(block: np.ndarray) -> int:
    """Split rule replayed by hand on one 8x8x8 occupancy block."""
    mask = 0
    if block.any():
        mask |= 1
        for o1 in range(8):
            x1, y1, z1 = 4 * (o1 & 1), 4 * ((o1 >> 1) & 1), 4 * (o1 >> 2)
            b1 = block[x1:x1 + 4, y1:y1 + 4, z1:z1 + 4]
            if b1.any():
                mask |= 1 << (1 + o1)
                for o2 in range(8):
                    x2, y2, z2 = x1 + 2 * (o2 & 1), y1 + 2 * ((o2 >> 1) & 1), z1 + 2 * (o2 >> 2)
                    if block[x2:x2 + 2, y2:y2 + 2, z2:z2 + 2].any():
                        mask |= 1 << (9 + 8 * o1 + o2)
    return mask


def test_fit_transform_unit_cube():
    cfg = VoxelizeConfig(64, 2)
    tf = fit_transform(np.array([[0.0, 0, 0], [1, 1, 1]]), cfg)
    assert tf.scale == 62.0
    lo, hi = tf.apply(np.array([[0.0, 0, 0], [1, 1, 1]]))
    assert np.array_equal(lo, [1, 1, 1])
    assert np.array_equal(hi, [63, 63, 63])


def test_fit_transform_elongated_box():
    cfg = VoxelizeConfig(64, 2)
    tf = fit_transform(np.array([[0.0, 0, 0], [2, 1, 1]]), cfg)
    assert tf.scale == 31.0
    lo, hi = tf.apply(np.array([[0.0, 0, 0], [2, 1, 1]]))
    assert np.array_equal(lo, [1, 16.5, 16.5])
    assert np.array_equal(hi, [63, 47.5, 47.5])


def test_fit_transform_translation_only():
    cfg = VoxelizeConfig(64, 2)
    tf = fit_transform(np.array([[0.0, 0, 0], [62, 10, 62]]), cfg)
    assert tf.scale == 1.0
    assert np.array_equal(tf.offset, [1, 27, 1])
    with pytest.raises(ValueError):
        fit_transform(np.array([[1.0, 1, 1], [1, 1, 1]]), cfg)  # degenerate
    with pytest.raises(ValueError):
        fit_transform(np.zeros((3, 3)), cfg)


def test_voxelize_config_validation():
    with pytest.raises(ValueError):
        VoxelizeConfig(20)
    with pytest.raises(ValueError):
        VoxelizeConfig(0)
    with pytest.raises(ValueError):
        VoxelizeConfig(16, padding=16)
    VoxelizeConfig(16, padding=0)


def test_tri_box_overlap_basic():
    half = np.array([0.5, 0.5, 0.5])
    inside = np.array([[0.1, 0.1, 0.1], [0.3, 0.1, 0.1], [0.1, 0.3, 0.1]])
    assert tri_box_overlap(inside, np.array([0.0, 0, 0]), half)
    beyond_x = inside + np.array([2.0, 0, 0])
    assert not tri_box_overlap(beyond_x, np.array([0.0, 0, 0]), half)
    # face contact counts as intersection
    touching = np.array([[0.5, -1, -1], [0.5, 1, -1], [0.5, 0, 1]])
    assert tri_box_overlap(touching, np.array([0.0, 0, 0]), half)


def test_tri_box_overlap_monte_carlo():
    rng = np.random.default_rng(50)
    u, v = np.meshgrid(np.linspace(0, 1, 60), np.linspace(0, 1, 60))
    keep = u + v <= 1.0
    bary = np.stack([u[keep], v[keep], 1.0 - u[keep] - v[keep]], axis=1)
    for _ in range(200):
        tri = rng.uniform(-1.5, 1.5, (3, 3))
        center = rng.uniform(-1, 1, 3)
        half = rng.uniform(0.2, 0.8, 3)
        samples = bary @ tri
        hit = bool(np.any(np.all(np.abs(samples - center) <= half, axis=1)))
        got = tri_box_overlap(tri, center, half)
        # dense surface samples hitting the box force a positive verdict;
        # the converse needs no tolerance since the test is closed
        if hit:
            assert got


def test_voxelize_single_triangles_match_dense_scan():
    from octgrid.builder import _tri_boxes_overlap

    rng = np.random.default_rng(51)
    cfg = VoxelizeConfig(16, 2)
    centers = np.stack(np.meshgrid(*([np.arange(16) + 0.5] * 3), indexing="ij"),
                       axis=-1).reshape(-1, 3)
    for _ in range(10):
        mesh = TriangleMesh(rng.uniform(0, 1, (3, 3)), np.array([[0, 1, 2]]))
        grid = voxelize_mesh(mesh, cfg)
        tri = fit_transform(mesh.bounds(), cfg).apply(mesh.vertices)
        # exhaustive scan: every voxel box tested, no candidate pruning
        dense = _tri_boxes_overlap(tri, centers, np.full(3, 0.5))
        assert np.array_equal(oct_to_ten(grid)[0] != 0, dense.reshape(16, 16, 16))
        # spot-check the batch against the one-box entry point
        for row in rng.integers(0, len(centers), size=40):
            assert dense[row] == tri_box_overlap(tri, centers[row], np.full(3, 0.5))


def test_voxelize_structure_minimality():
    rng = np.random.default_rng(52)
    mesh = TriangleMesh(rng.uniform(0, 1, (3, 3)), np.array([[0, 1, 2]]))
    grid = voxelize_mesh(mesh, VoxelizeConfig(32, 2))
    occ = oct_to_ten(grid)[0] != 0
    d = 4
    for t, tree in enumerate(grid.trees):
        td, th, tw = t // (d * d), (t // d) % d, t % d
        block = occ[8 * td:8 * td + 8, 8 * th:8 * th + 8, 8 * tw:8 * tw + 8]
        assert tree.mask == expected_mask(block)


def test_structure_from_dense_examples():
    zeros = np.zeros((16, 16, 16), dtype=np.float32)
    s = structure_from_dense(zeros)
    assert all(t == TreeBits.EMPTY for t in s.trees)
    ones = np.ones((8, 8, 8))
    s1 = structure_from_dense(ones)
    assert s1.trees[0] == TreeBits.FULL
    single = np.zeros((16, 16, 16))
    single[0, 0, 0] = 1
    s2 = structure_from_dense(single)
    assert s2.trees[0] == TreeBits.from_set_bits([0, 1, 9])
    assert all(t == TreeBits.EMPTY for t in s2.trees[1:])
    with pytest.raises(ValueError):
        structure_from_dense(np.zeros((12, 8, 8)))
    with pytest.raises(ValueError):
        structure_from_dense(np.full((8, 8, 8), 0.5))  # not binary


def test_structure_from_dense_random_blocks():
    rng = np.random.default_rng(53)
    for _ in range(20):
        occ = (rng.random((16, 8, 8)) < 0.03)
        s = structure_from_dense(occ)
        assert s.trees[0].mask == expected_mask(occ[:8])
        assert s.trees[1].mask == expected_mask(occ[8:])


def test_build_from_points_means():
    pts = PointSet(np.array([[0.5, 0.5, 0.5], [0.6, 0.5, 0.5], [10.2, 10.7, 10.4]]),
                   features=np.array([[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]]))
    cfg = VoxelizeConfig(16, 2, transform=Affine(1.0, np.zeros(3)))
    grid, labels = build_from_points(pts, cfg)
    assert labels is None
    assert np.array_equal(get(grid, 0, 0, 0), [2.0, 3.0])
    assert np.array_equal(get(grid, 10, 10, 10), [5.0, 6.0])
    assert np.array_equal(get(grid, 4, 4, 4), [0.0, 0.0])


def test_build_from_points_default_feature_is_density_one():
    pts = PointSet(np.array([[1.2, 1.2, 1.2], [1.3, 1.4, 1.2]]))
    cfg = VoxelizeConfig(8, 2, transform=Affine(1.0, np.zeros(3)))
    grid, _ = build_from_points(pts, cfg)
    assert grid.channels == 1
    assert get(grid, 1, 1, 1)[0] == 1.0


def test_build_from_points_conserves_global_mean():
    rng = np.random.default_rng(54)
    pts = rng.uniform(0, 1, (200, 3))
    feats = rng.standard_normal((200, 3))
    ps = PointSet(pts, features=feats)
    cfg = VoxelizeConfig(16, 2)
    grid, _ = build_from_points(ps, cfg)
    vox = np.floor(fit_transform(ps.bounds(), cfg).apply(pts)).astype(int)
    keys = (vox[:, 0] * 16 + vox[:, 1]) * 16 + vox[:, 2]
    uniq, counts = np.unique(keys, return_counts=True)
    total = np.zeros(3)
    for key, count in zip(uniq, counts):
        i, j, k = key // 256, (key // 16) % 16, key % 16
        total += count * get(grid, int(i), int(j), int(k)).astype(np.float64)
    assert np.allclose(total / len(pts), feats.mean(axis=0), rtol=1e-5, atol=1e-5)


def test_build_from_points_labels():
    pts = np.array([[0.5, 0.5, 0.5]] * 3 + [[5.5, 5.5, 5.5]] * 2)
    labels = np.array([2, 2, 0, 1, 0])
    ps = PointSet(pts, labels=labels)
    cfg = VoxelizeConfig(8, 2, transform=Affine(1.0, np.zeros(3)))
    _, lg = build_from_points(ps, cfg, num_classes=3)
    assert lg is not None
    assert get(lg, 0, 0, 0)[0] == 2.0  # majority
    assert get(lg, 5, 5, 5)[0] == 0.0  # tie breaks to the lowest id
    assert get(lg, 3, 3, 3)[0] == 3.0  # empty leaf holds the void label
    with pytest.raises(ValueError):
        build_from_points(ps, cfg, num_classes=2)  # label 2 out of range


def test_build_from_points_rejects_out_of_volume():
    ps = PointSet(np.array([[100.0, 0, 0]]))
    cfg = VoxelizeConfig(8, 2, transform=Affine(1.0, np.zeros(3)))
    with pytest.raises(ValueError):
        build_from_points(ps, cfg)


def test_builders_are_deterministic(tmp_path):
    rng = np.random.default_rng(55)
    mesh = TriangleMesh(rng.uniform(0, 1, (6, 3)), np.array([[0, 1, 2], [3, 4, 5]]))
    a, b = tmp_path / "a.ocgr", tmp_path / "b.ocgr"
    save_grid(a, voxelize_mesh(mesh, VoxelizeConfig(32, 2)))
    save_grid(b, voxelize_mesh(mesh, VoxelizeConfig(32, 2)))
    assert a.read_bytes() == b.read_bytes()


def test_mesh_and_pointset_validation():
    verts = np.zeros((3, 3))
    with pytest.raises(ValueError):
        TriangleMesh(verts, np.array([[0, 1, 3]]))  # face index out of range
    with pytest.raises(ValueError):
        TriangleMesh(verts, np.array([[0, 1]]))
    with pytest.raises(ValueError):
        PointSet(np.zeros((2, 3)), labels=np.array([0, -1]))
    with pytest.raises(ValueError):
        PointSet(np.zeros((2, 3)), features=np.zeros((3, 1)))
    with pytest.raises(ValueError):
        PointSet(np.zeros((2, 2)))


def test_rotated_geometry():
    rot = np.array([[0.0, -1, 0], [1, 0, 0], [0, 0, 1]])  # 90 degrees about z
    mesh = TriangleMesh(np.array([[1.0, 0, 0], [0, 1, 0], [0, 0, 1]]), np.array([[0, 1, 2]]))
    turned = mesh.rotated(rot)
    assert np.allclose(turned.vertices[0], [0, 1, 0])
    ps = PointSet(np.array([[1.0, 0, 0]]))
    assert np.allclose(ps.rotated(rot).points[0], [0, 1, 0])
