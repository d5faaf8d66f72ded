"""Command line front end.

Subcommands:

* ``voxelize``  mesh (.off) or point cloud (.xyz/.pts/.txt) to an .ocgr grid
* ``stats``     memory report and leaf histogram for an .ocgr file
* ``check``     replay structured ops against their dense oracles
* ``bench``     timing and operation-count table as CSV
* ``convert``   .ocgr to .dten and back (direction sniffed from the magic)
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import backend as _backend
from .bench import leaf_sizes_per_row, memory_report, records_to_csv, run_bench
from .builder import VoxelizeConfig, build_from_points, structure_from_dense, voxelize_mesh
from .fileio import (FileFormatError, load_dense, load_grid, read_off, read_xyz,
                     save_dense, save_grid)
from .grid import Pool, oct_to_ten, ten_to_oct
from .verify import CHECK_RESOLUTIONS, run_check

__all__ = ["main"]

_POINT_SUFFIXES = {".xyz", ".pts", ".txt"}


def _emit(payload: dict, out: str | None) -> None:
    text = json.dumps(payload, indent=2)
    if out:
        Path(out).write_text(text + "\n")
    print(text)


def cmd_voxelize(args) -> int:
    src = Path(args.input)
    cfg = VoxelizeConfig(resolution=args.resolution, padding=args.padding)
    fmt = args.format
    if fmt == "auto":
        if src.suffix.lower() == ".off":
            fmt = "off"
        elif src.suffix.lower() in _POINT_SUFFIXES:
            fmt = "xyz"
        else:
            raise ValueError(f"cannot infer input kind from suffix {src.suffix!r}; "
                             f"pass --format off|xyz")
    labels_path = None
    if fmt == "off":
        grid = voxelize_mesh(read_off(src), cfg)
    else:
        points = read_xyz(src, labeled=args.labeled)
        grid, label_grid = build_from_points(points, cfg, num_classes=args.num_classes)
        if label_grid is not None:
            out = Path(args.out)
            labels_path = out.with_name(out.stem + ".labels" + out.suffix)
            save_grid(labels_path, label_grid)
    save_grid(args.out, grid)
    report = memory_report(grid).to_dict()
    report.update({
        "schema": "octgrid-voxelize/1",
        "input": str(src),
        "output": str(args.out),
        "labels_output": str(labels_path) if labels_path else None,
    })
    _emit(report, None)
    return 0


def cmd_stats(args) -> int:
    grid = load_grid(args.input)
    sizes = leaf_sizes_per_row(grid)
    depth_of = {8: 0, 4: 1, 2: 2, 1: 3}
    hist = {0: 0, 1: 0, 2: 0, 3: 0}
    for size, count in zip(*np.unique(sizes, return_counts=True)):
        hist[depth_of[int(size)]] = int(count)
    payload = memory_report(grid).to_dict()
    payload.update({
        "schema": "octgrid-stats/1",
        "input": str(args.input),
        "n_trees": grid.n_trees,
        "leaves_by_depth": {str(d): hist[d] for d in range(4)},
    })
    _emit(payload, args.out)
    return 0


def cmd_check(args) -> int:
    report = run_check(args.resolution, args.trials, args.seed, args.pool,
                       threads=args.threads, backend=args.backend)
    _emit(report, args.out)
    return 0 if report["all_pass"] else 1


def cmd_bench(args) -> int:
    records = run_bench(args.resolution, args.occupancy, args.reps, args.seed,
                        threads=args.threads, channels=args.channels,
                        backends=args.backend)
    csv_text = records_to_csv(records)
    if args.out:
        Path(args.out).write_text(csv_text)
    else:
        sys.stdout.write(csv_text)
    return 0


def cmd_convert(args) -> int:
    with open(args.input, "rb") as fh:
        magic = fh.read(4)
    if magic == b"OCGR":
        grid = load_grid(args.input)
        tensor = oct_to_ten(grid)
        if args.channel is not None:
            tensor = tensor[args.channel:args.channel + 1]
        save_dense(args.out, tensor)
        payload = {"schema": "octgrid-convert/1", "direction": "octree-to-dense",
                   "shape": [int(s) for s in tensor.shape]}
    elif magic == b"DTEN":
        tensor = load_dense(args.input)
        if args.channel is not None:
            tensor = tensor[args.channel:args.channel + 1]
        structure = structure_from_dense(np.any(tensor != 0, axis=0))
        grid = ten_to_oct(tensor, structure, Pool.coerce(args.pool))
        save_grid(args.out, grid)
        payload = {"schema": "octgrid-convert/1", "direction": "dense-to-octree",
                   "values": int(grid.data.shape[0]), "channels": grid.channels}
    else:
        raise FileFormatError(f"{args.input}: unrecognised magic {magic!r}")
    payload["input"] = str(args.input)
    payload["output"] = str(args.out)
    _emit(payload, None)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="octgrid",
                                     description="sparse voxel grids on shallow octrees")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("voxelize", help="rasterise a mesh or point cloud into an octree grid")
    p.add_argument("input", help=".off mesh or .xyz/.pts/.txt point cloud")
    p.add_argument("--format", choices=["auto", "off", "xyz"], default="auto",
                   help="input kind; auto infers from the file suffix")
    p.add_argument("--resolution", type=int, required=True,
                   help="cubic voxel resolution, multiple of 8")
    p.add_argument("--padding", type=int, default=2, help="empty voxels kept around the model")
    p.add_argument("--labeled", action="store_true",
                   help="treat the last point column as an integer class label")
    p.add_argument("--num-classes", type=int, default=None,
                   help="class count; empty voxels get the void label num_classes")
    p.add_argument("--out", required=True, help="output .ocgr path")
    p.set_defaults(fn=cmd_voxelize)

    p = sub.add_parser("stats", help="memory report for an .ocgr file")
    p.add_argument("input")
    p.add_argument("--out", default=None, help="also write the JSON report here")
    p.set_defaults(fn=cmd_stats)

    p = sub.add_parser("check", help="compare structured ops against dense oracles")
    p.add_argument("--resolution", type=int, default=32, choices=CHECK_RESOLUTIONS)
    p.add_argument("--trials", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--pool", default="avg", choices=["max", "avg"])
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--backend", default=None, choices=_backend.available())
    p.add_argument("--out", default=None, help="also write the JSON report here")
    p.set_defaults(fn=cmd_check)

    p = sub.add_parser("bench", help="time conv paths and count multiplications")
    p.add_argument("--resolution", type=int, nargs="+", default=[16, 32])
    p.add_argument("--occupancy", type=float, nargs="+", default=[0.05, 0.2])
    p.add_argument("--reps", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--channels", type=int, default=1)
    p.add_argument("--backend", nargs="+", default=None, choices=_backend.available())
    p.add_argument("--out", default=None, help="output CSV path (default stdout)")
    p.set_defaults(fn=cmd_bench)

    p = sub.add_parser("convert", help="convert between .ocgr and .dten")
    p.add_argument("input")
    p.add_argument("--out", required=True)
    p.add_argument("--channel", type=int, default=None, help="keep only this channel")
    p.add_argument("--pool", default="max", choices=["max", "avg"],
                   help="pooling rule when collapsing dense voxels into leaves")
    p.set_defaults(fn=cmd_convert)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ValueError, FileFormatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
