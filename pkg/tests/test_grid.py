"""Grid addressing, dense expansion/pooling and the OCGR file format."""

import os

import numpy as np
import pytest

import octgrid.backend as backend_mod
from octgrid.fileio import FileFormatError, load_dense, load_grid, save_dense, save_grid
from octgrid.grid import (GridOctree, GridStructure, Pool, get, locate, oct_to_ten,
                          pack_structure, same_structure, ten_to_oct, wrap_dense)
from octgrid.synth import empty_structure, fully_split_structure, random_grid, random_structure
from octgrid.tree import TreeBits

BACKENDS = list(backend_mod.available())


def test_structure_validation():
    with pytest.raises(ValueError):
        GridStructure((2, 1, 1), (TreeBits.EMPTY,))  # tree count mismatch
    with pytest.raises(ValueError):
        GridStructure((0, 1, 1), ())
    s = GridStructure((2, 1, 1), (TreeBits.EMPTY, TreeBits(1)))
    assert s.n_trees == 2
    assert s.resolution == (16, 8, 8)
    assert s.num_values() == 1 + 8


def test_grid_validation_and_immutability():
    s = empty_structure((1, 1, 1))
    with pytest.raises(ValueError):
        GridOctree(s, np.zeros((2, 1), dtype=np.float32))  # wrong row count
    g = GridOctree.filled(s, 3, value=1.5)
    assert g.channels == 3
    assert g.data.dtype == np.float32
    with pytest.raises(ValueError):
        g.data[0, 0] = 2.0


def test_pool_coerce():
    assert Pool.coerce("max") is Pool.MAX
    assert Pool.coerce("maximum") is Pool.MAX
    assert Pool.coerce("avg") is Pool.AVG
    assert Pool.coerce("average") is Pool.AVG
    assert Pool.coerce("mean") is Pool.AVG
    assert Pool.coerce(Pool.MAX) is Pool.MAX
    with pytest.raises(ValueError):
        Pool.coerce("median")


def test_pack_structure_known_values():
    s = GridStructure((2, 1, 1), (TreeBits.EMPTY, TreeBits.FULL))
    bits, prefix, base = pack_structure(s)
    assert bits.shape == (2, 73) and prefix.shape == (2, 74) and base.shape == (3,)
    assert bits[0].sum() == 0 and bits[1].sum() == 73
    assert prefix[0, -1] == 0 and prefix[1, -1] == 73
    assert base.tolist() == [0, 1, 513]


def test_locate_examples():
    g = GridOctree.filled(empty_structure((2, 1, 1)), 1)
    a = locate(g, 0, 0, 0)
    b = locate(g, 7, 7, 7)
    assert a == b  # one size-8 cell covers the whole first tree
    assert a.size == 8 and a.node == 0 and a.data_offset == 0
    c = locate(g, 8, 0, 0)
    assert c.tree_index == 1 and c.data_offset == 1
    with pytest.raises(IndexError):
        locate(g, 16, 0, 0)
    with pytest.raises(IndexError):
        locate(g, -1, 0, 0)


def test_locate_fully_split_offsets():
    g = GridOctree(fully_split_structure((1, 1, 1)),
                   np.arange(512, dtype=np.float32).reshape(512, 1))
    for x, y, z in ((0, 0, 0), (1, 0, 0), (2, 0, 0), (0, 0, 1), (7, 7, 7), (5, 3, 6)):
        digits = [4 * ((z >> s) & 1) + 2 * ((y >> s) & 1) + ((x >> s) & 1) for s in (2, 1, 0)]
        addr = locate(g, x, y, z)
        assert addr.data_offset == 64 * digits[0] + 8 * digits[1] + digits[2]
        assert addr.size == 1 and addr.origin == (x, y, z)


def test_get_matches_expansion():
    rng = np.random.default_rng(10)
    g = random_grid(rng, (2, 1, 2), 3)
    t = oct_to_ten(g)
    for i in range(16):
        for j in range(8):
            for k in range(16):
                assert np.array_equal(get(g, i, j, k), t[:, i, j, k])


def test_oct_to_ten_constant_and_roundtrip():
    rng = np.random.default_rng(11)
    g = GridOctree.filled(empty_structure((1, 2, 1)), 2, value=3.25)
    t = oct_to_ten(g)
    assert t.shape == (2, 8, 16, 8)
    assert (t == 3.25).all()
    for _ in range(20):
        g = random_grid(rng, (2, 2, 1), 2)
        t = oct_to_ten(g)
        for pool in (Pool.MAX, Pool.AVG):
            back = ten_to_oct(t, g.structure, pool)
            assert np.array_equal(back.data, g.data)


def test_ten_to_oct_examples():
    s = empty_structure((1, 1, 1))
    t = np.arange(1, 513, dtype=np.float32).reshape(1, 8, 8, 8)
    assert ten_to_oct(t, s, Pool.AVG).data[0, 0] == 256.5
    assert ten_to_oct(t, s, Pool.MAX).data[0, 0] == 512.0
    const = np.full((3, 8, 8, 8), 7.0, dtype=np.float32)
    for pool in (Pool.MAX, Pool.AVG):
        assert (ten_to_oct(const, s, pool).data == 7.0).all()
    full = fully_split_structure((1, 1, 1))
    g = ten_to_oct(t, full, Pool.MAX)
    assert np.array_equal(oct_to_ten(g), t)
    with pytest.raises(ValueError):
        ten_to_oct(t[:, :4], s, Pool.MAX)  # resolution mismatch
    with pytest.raises(ValueError):
        ten_to_oct(t[0], s, Pool.MAX)  # missing channel axis


def test_wrap_dense_examples():
    rng = np.random.default_rng(12)
    g = random_grid(rng, (1, 2, 1), 2)
    assert np.array_equal(wrap_dense(lambda t: t, g, Pool.AVG).data, g.data)
    doubled = wrap_dense(lambda t: 2.0 * t, g, Pool.MAX)
    assert np.array_equal(doubled.data, 2.0 * g.data)
    assert same_structure(doubled, g)
    g2 = random_grid(rng, (2, 2, 2), 2)
    halved = wrap_dense(lambda t: t[:, ::2, ::2, ::2], g2, Pool.AVG,
                        out_structure=empty_structure((1, 1, 1)))
    assert halved.dims == (1, 1, 1)


def test_same_structure():
    rng = np.random.default_rng(13)
    a = random_grid(rng, (1, 1, 2), 1)
    assert same_structure(a, a)
    assert same_structure(a.structure, a.structure)
    empty = GridOctree.filled(empty_structure((1, 1, 2)), 1)
    full = GridOctree.filled(fully_split_structure((1, 1, 2)), 1)
    assert not same_structure(empty, full)
    assert not same_structure(a, random_grid(rng, (2, 1, 1), 1))


def test_backend_parity_expand_and_pool():
    if len(BACKENDS) < 2:
        pytest.skip("native backend not built")
    rng = np.random.default_rng(14)
    for _ in range(20):
        g = random_grid(rng, (2, 2, 2), 2)
        ta = oct_to_ten(g, backend="python")
        tb = oct_to_ten(g, backend="native")
        assert np.array_equal(ta, tb)
        s = random_structure(rng, (2, 2, 2))
        for pool in (Pool.MAX, Pool.AVG):
            ga = ten_to_oct(ta, s, pool, backend="python")
            gb = ten_to_oct(tb, s, pool, backend="native")
            assert np.array_equal(ga.data, gb.data)


def test_backend_env_override(monkeypatch):
    monkeypatch.setenv("OCTGRID_BACKEND", "python")
    assert backend_mod.default_name() == "python"
    monkeypatch.setenv("OCTGRID_BACKEND", "nonsense")
    with pytest.raises(ValueError):
        backend_mod.default_name()


def test_ocgr_roundtrip_and_sizes(tmp_path):
    rng = np.random.default_rng(15)
    g = random_grid(rng, (2, 1, 2), 3)
    path = tmp_path / "g.ocgr"
    save_grid(path, g)
    g2 = load_grid(path)
    assert same_structure(g, g2)
    assert np.array_equal(g.data, g2.data)
    # 4-byte magic + 5 u32 header fields, then exactly the memory model
    assert os.path.getsize(path) == 24 + g.n_trees * 10 + 4 * g.data.size
    save_grid(tmp_path / "again.ocgr", g)
    assert (tmp_path / "again.ocgr").read_bytes() == path.read_bytes()


def test_ocgr_rejects_corruption(tmp_path):
    rng = np.random.default_rng(16)
    g = random_grid(rng, (1, 1, 1), 1)
    path = tmp_path / "g.ocgr"
    save_grid(path, g)
    raw = bytearray(path.read_bytes())

    bad = tmp_path / "bad.ocgr"
    bad.write_bytes(b"NOPE" + bytes(raw[4:]))
    with pytest.raises(FileFormatError):
        load_grid(bad)
    bad.write_bytes(bytes(raw[:10]))
    with pytest.raises(FileFormatError):
        load_grid(bad)
    bad.write_bytes(bytes(raw) + b"\x00\x00\x00\x00")
    with pytest.raises(FileFormatError):
        load_grid(bad)
    wrong_version = bytearray(raw)
    wrong_version[4] = 9
    bad.write_bytes(bytes(wrong_version))
    with pytest.raises(FileFormatError):
        load_grid(bad)
    orphan = bytearray(raw)
    orphan[24] = 0x02  # depth-1 split bit without the root: invalid tree
    bad.write_bytes(bytes(orphan))
    with pytest.raises(FileFormatError):
        load_grid(bad)


def test_dten_roundtrip(tmp_path):
    rng = np.random.default_rng(17)
    t = rng.standard_normal((2, 8, 16, 8)).astype(np.float32)
    path = tmp_path / "t.dten"
    save_dense(path, t)
    assert np.array_equal(load_dense(path), t)
    assert os.path.getsize(path) == 20 + 4 * t.size
    bad = tmp_path / "bad.dten"
    bad.write_bytes(b"XXXX" + path.read_bytes()[4:])
    with pytest.raises(FileFormatError):
        load_dense(bad)
