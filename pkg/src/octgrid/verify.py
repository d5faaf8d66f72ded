"""Oracle equivalence suite behind the ``check`` CLI command.

Every structured operation is replayed against its dense counterpart on
seeded random inputs: expand the grid, run the dense reference, pool back,
compare.  Convolution must agree within a relative tolerance; pooling,
unpooling, pointwise maps and concatenation must agree exactly.
"""

from __future__ import annotations

import numpy as np

from . import backend as _backend
from .dense import ConvKernel, dense_avgpool2, dense_conv, dense_maxpool2, dense_unpool2, relu
from .grid import GridOctree, Pool, oct_to_ten, same_structure, wrap_dense
from .ops import concat, conv_efficient, conv_naive, pointwise, pool2, unpool2, unpool2_guided
from .synth import fully_split_structure, random_grid, random_kernel, refine_structure

__all__ = ["CONV_TOLERANCE", "run_check"]

CONV_TOLERANCE = 1e-5
CHECK_RESOLUTIONS = (16, 32, 64)


def _rel_err(a: np.ndarray, b: np.ndarray) -> float:
    """Max absolute difference scaled by the reference magnitude."""
    scale = max(float(np.abs(b).max(initial=0.0)), 1e-30)
    return float(np.abs(a.astype(np.float64) - b.astype(np.float64)).max(initial=0.0) / scale)


def _abs_err(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.abs(a.astype(np.float64) - b.astype(np.float64)).max(initial=0.0))


def run_check(resolution: int, trials: int, seed: int, pool, threads: int = 1,
              backend: str | None = None) -> dict:
    """Run all equivalence checks at one resolution; returns a report dict
    with per-op worst errors and pass flags."""
    if resolution not in CHECK_RESOLUTIONS:
        raise ValueError(f"check resolution must be one of {CHECK_RESOLUTIONS}, got {resolution}")
    if trials < 1:
        raise ValueError("need at least one trial")
    pool = Pool.coerce(pool)
    n = resolution // 8
    dims = (n, n, n)
    half_dims = (max(n // 2, 1), max(n // 2, 1), max(n // 2, 1))
    c_in, c_out = (3, 2) if resolution <= 16 else (2, 3) if resolution <= 32 else (2, 2)
    rng = np.random.default_rng(seed)

    errs: dict[str, float] = {}

    def track(op: str, err: float):
        errs[op] = max(errs.get(op, 0.0), err)

    for _ in range(trials):
        p = tuple(rng.uniform(0.2, 0.9, size=3))
        grid = random_grid(rng, dims, c_in, p)
        kernel = random_kernel(rng, c_out, c_in, 3)
        oracle = wrap_dense(lambda t: dense_conv(t, kernel), grid, pool)
        naive, _ = conv_naive(grid, kernel, pool, threads=threads, backend=backend)
        eff, _ = conv_efficient(grid, kernel, pool, threads=threads, backend=backend)
        track("conv_naive", _rel_err(naive.data, oracle.data))
        track("conv_efficient", _rel_err(eff.data, oracle.data))
        track("conv_paths_agree", _rel_err(eff.data, naive.data))

        full = GridOctree(
            fully_split_structure(dims),
            rng.standard_normal((fully_split_structure(dims).num_values(), c_in)).astype(np.float32),
        )
        dense_full = oct_to_ten(full, backend=backend)
        track("pool2_max", _abs_err(oct_to_ten(pool2(full, Pool.MAX), backend=backend),
                                    dense_maxpool2(dense_full)))
        track("pool2_avg", _abs_err(oct_to_ten(pool2(full, Pool.AVG), backend=backend),
                                    dense_avgpool2(dense_full)))

        small = random_grid(rng, half_dims, c_in, p)
        up = unpool2(small)
        dense_up = dense_unpool2(oct_to_ten(small, backend=backend))
        track("unpool2", _abs_err(oct_to_ten(up, backend=backend), dense_up))

        guide = refine_structure(rng, up.structure, p_extra=0.3)
        guided = unpool2_guided(small, guide, backend=backend)
        if not same_structure(guided.structure, guide):
            track("unpool2_guided", float("inf"))
        else:
            track("unpool2_guided", _abs_err(oct_to_ten(guided, backend=backend), dense_up))

        track("pointwise_relu", _abs_err(oct_to_ten(pointwise(grid, relu), backend=backend),
                                         relu(oct_to_ten(grid, backend=backend))))

        other = GridOctree(grid.structure,
                           rng.standard_normal((grid.data.shape[0], 2)).astype(np.float32))
        stacked = np.concatenate([oct_to_ten(grid, backend=backend),
                                  oct_to_ten(other, backend=backend)], axis=0)
        track("concat", _abs_err(oct_to_ten(concat(grid, other), backend=backend), stacked))

    # One identity trial: a 1x1x1 identity kernel must round-trip exactly.
    ident = ConvKernel(np.eye(c_in, dtype=np.float32).reshape(c_in, c_in, 1, 1, 1),
                       np.zeros(c_in, dtype=np.float32))
    grid = random_grid(rng, dims, c_in)
    oracle = wrap_dense(lambda t: dense_conv(t, ident), grid, pool)
    naive, _ = conv_naive(grid, ident, pool, threads=threads, backend=backend)
    track("conv_identity", _abs_err(naive.data, oracle.data))

    exact_ops = {"pool2_max", "pool2_avg", "unpool2", "unpool2_guided",
                 "pointwise_relu", "concat", "conv_identity"}
    ops = {}
    for op, err in sorted(errs.items()):
        tol = 0.0 if op in exact_ops else CONV_TOLERANCE
        ops[op] = {"max_err": err, "tolerance": tol, "pass": bool(err <= tol)}
    return {
        "schema": "octgrid-check/1",
        "resolution": resolution,
        "trials": trials,
        "seed": seed,
        "pool": pool.value,
        "threads": threads,
        "backend": backend or _backend.default_name(),
        "ops": ops,
        "all_pass": all(entry["pass"] for entry in ops.values()),
    }
