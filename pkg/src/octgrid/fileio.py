"""File formats: OCGR grid-octree containers, DTEN raw dense tensors, and
readers for OFF meshes and XYZ point files.

OCGR layout (all integers little-endian):

    magic   4 bytes  b"OCGR"
    version u32      1
    D,H,W,C u32 each
    trees   D*H*W records of 10 bytes, row-major (d, h, w); split bit i
            sits in byte i//8 at bit position i%8, bits 73..79 zero
    values  float32 payload in canonical order (per-tree blocks, leaves by
            data_index, channels innermost)

DTEN layout: magic b"DTEN", u32 C,X,Y,Z, float32 payload in C order.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .builder import PointSet, TriangleMesh
from .grid import GridOctree, GridStructure
from .tree import TREE_BYTES, TreeBits

__all__ = [
    "FileFormatError",
    "OCGR_MAGIC",
    "DTEN_MAGIC",
    "save_grid",
    "load_grid",
    "save_dense",
    "load_dense",
    "read_off",
    "read_xyz",
]

OCGR_MAGIC = b"OCGR"
OCGR_VERSION = 1
DTEN_MAGIC = b"DTEN"


class FileFormatError(ValueError):
    pass


def save_grid(path, grid: GridOctree) -> None:
    d, h, w = grid.dims
    with open(path, "wb") as fh:
        fh.write(OCGR_MAGIC)
        fh.write(struct.pack("<5I", OCGR_VERSION, d, h, w, grid.channels))
        for tree in grid.trees:
            fh.write(tree.to_bytes())
        fh.write(np.ascontiguousarray(grid.data, dtype="<f4").tobytes())


def load_grid(path) -> GridOctree:
    raw = Path(path).read_bytes()
    if raw[:4] != OCGR_MAGIC:
        raise FileFormatError(f"{path}: not an OCGR file")
    if len(raw) < 24:
        raise FileFormatError(f"{path}: truncated header")
    version, d, h, w, c = struct.unpack_from("<5I", raw, 4)
    if version != OCGR_VERSION:
        raise FileFormatError(f"{path}: unsupported OCGR version {version}")
    n = d * h * w
    offset = 24
    if len(raw) < offset + n * TREE_BYTES:
        raise FileFormatError(f"{path}: truncated tree records")
    try:
        trees = tuple(
            TreeBits.from_bytes(raw[offset + t * TREE_BYTES: offset + (t + 1) * TREE_BYTES])
            for t in range(n)
        )
        structure = GridStructure((d, h, w), trees)
    except ValueError as exc:
        raise FileFormatError(f"{path}: {exc}") from exc
    offset += n * TREE_BYTES
    total = structure.num_values()
    expected = total * c * 4
    if len(raw) != offset + expected:
        raise FileFormatError(f"{path}: payload is {len(raw) - offset} bytes, expected {expected}")
    data = np.frombuffer(raw, dtype="<f4", count=total * c, offset=offset).reshape(total, c)
    return GridOctree(structure, data.copy())


def save_dense(path, tensor: np.ndarray) -> None:
    tensor = np.ascontiguousarray(tensor, dtype="<f4")
    if tensor.ndim != 4:
        raise ValueError("dense tensor must have shape (channels, X, Y, Z)")
    with open(path, "wb") as fh:
        fh.write(DTEN_MAGIC)
        fh.write(struct.pack("<4I", *tensor.shape))
        fh.write(tensor.tobytes())


def load_dense(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if raw[:4] != DTEN_MAGIC:
        raise FileFormatError(f"{path}: not a DTEN file")
    if len(raw) < 20:
        raise FileFormatError(f"{path}: truncated header")
    c, x, y, z = struct.unpack_from("<4I", raw, 4)
    expected = c * x * y * z * 4
    if len(raw) != 20 + expected:
        raise FileFormatError(f"{path}: payload is {len(raw) - 20} bytes, expected {expected}")
    return np.frombuffer(raw, dtype="<f4", count=c * x * y * z, offset=20).reshape(c, x, y, z).copy()


def _data_lines(path):
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        text = line.split("#", 1)[0].strip()
        if text:
            yield lineno, text


def read_off(path) -> TriangleMesh:
    """OFF mesh reader; faces must be triangles."""
    lines = _data_lines(path)
    try:
        lineno, header = next(lines)
    except StopIteration:
        raise FileFormatError(f"{path}: empty file") from None
    if header != "OFF":
        # Some writers put the counts on the OFF line itself.
        if header.startswith("OFF") and len(header.split()) == 4:
            counts = header.split()[1:]
        else:
            raise FileFormatError(f"{path}: line {lineno}: missing OFF header")
    else:
        try:
            counts = next(lines)[1].split()
        except StopIteration:
            raise FileFormatError(f"{path}: missing element counts") from None
    if len(counts) != 3:
        raise FileFormatError(f"{path}: malformed element counts {counts}")
    n_verts, n_faces, _ = (int(c) for c in counts)
    verts = np.empty((n_verts, 3))
    for v in range(n_verts):
        try:
            lineno, text = next(lines)
        except StopIteration:
            raise FileFormatError(f"{path}: expected {n_verts} vertices") from None
        parts = text.split()
        if len(parts) < 3:
            raise FileFormatError(f"{path}: line {lineno}: malformed vertex")
        verts[v] = [float(p) for p in parts[:3]]
    faces = np.empty((n_faces, 3), dtype=np.int64)
    for f in range(n_faces):
        try:
            lineno, text = next(lines)
        except StopIteration:
            raise FileFormatError(f"{path}: expected {n_faces} faces") from None
        parts = text.split()
        if int(parts[0]) != 3:
            raise FileFormatError(f"{path}: line {lineno}: only triangle faces are supported")
        if len(parts) < 4:
            raise FileFormatError(f"{path}: line {lineno}: malformed face")
        faces[f] = [int(p) for p in parts[1:4]]
    return TriangleMesh(verts, faces)


def read_xyz(path, labeled: bool = False) -> PointSet:
    """XYZ point reader: ``x y z [f1 .. fF] [label]`` per line.

    With ``labeled`` the last column is an integer class id.  Any columns
    between the coordinates and the label are features; points with no
    feature columns get none (builders then use occupancy).
    """
    rows = []
    width = None
    for lineno, text in _data_lines(path):
        parts = text.split()
        if width is None:
            width = len(parts)
            if width < 3 + (1 if labeled else 0):
                raise FileFormatError(f"{path}: line {lineno}: expected at least "
                                      f"{3 + (1 if labeled else 0)} columns")
        elif len(parts) != width:
            raise FileFormatError(f"{path}: line {lineno}: inconsistent column count")
        rows.append([float(p) for p in parts])
    if not rows:
        raise FileFormatError(f"{path}: no points")
    table = np.asarray(rows)
    points = table[:, :3]
    labels = None
    feat_end = table.shape[1]
    if labeled:
        feat_end -= 1
        labels = table[:, feat_end]
        if np.any(labels != np.round(labels)) or labels.min() < 0:
            raise FileFormatError(f"{path}: labels must be non-negative integers")
        labels = labels.astype(np.int64)
    features = table[:, 3:feat_end] if feat_end > 3 else None
    return PointSet(points, features, labels)
