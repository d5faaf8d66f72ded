# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels: dense expansion, structure pooling and the two octree
convolution paths.

Trees are consumed in packed form (see ``grid.pack_structure``): unpacked
split bits (n, 73), prefix popcounts (n, 74) and payload row offsets
(n + 1,).  All loops run without the GIL so callers can chunk the tree
range across threads; chunks write disjoint output rows.

Convolution reads neighbours through the octree structure (zero outside the
grid), evaluates in float64, rounds each voxel to float32 and pools over
the cell.  The efficient path evaluates cells of size 4 and 8 via per-tap
in-cell products: interior voxels share one full-kernel sum, boundary
voxels combine an in-cell subset sum (additions only) with explicit
out-of-cell taps.  Cells of size 1 and 2 use the per-voxel path.
"""

import numpy as np

cimport numpy as cnp
from libc.stdlib cimport free, malloc

ctypedef cnp.uint8_t u8
ctypedef cnp.int32_t i32
ctypedef cnp.int64_t i64
ctypedef cnp.float32_t f32
ctypedef cnp.float64_t f64

cdef enum:
    MAX_TAPS = 1331  # 11x11x11, far beyond any sensible kernel


cdef inline int _leaf_of(const u8* tb, int x, int y, int z) nogil:
    cdef int o1, o2, o3, n1, n2
    if tb[0] == 0:
        return 0
    o1 = 4 * (z >> 2) + 2 * (y >> 2) + (x >> 2)
    n1 = 1 + o1
    if tb[n1] == 0:
        return n1
    o2 = 4 * ((z >> 1) & 1) + 2 * ((y >> 1) & 1) + ((x >> 1) & 1)
    n2 = 9 + 8 * o1 + o2
    if tb[n2] == 0:
        return n2
    o3 = 4 * (z & 1) + 2 * (y & 1) + (x & 1)
    return 73 + 64 * o1 + 8 * o2 + o3


cdef inline i64 _data_idx(const i32* pp, int leaf) nogil:
    cdef int pa, before
    if leaf == 0:
        return 0
    pa = (leaf - 1) >> 3
    before = pp[leaf] if leaf < 73 else pp[73]
    return 8 * pp[pa] + 1 - before + ((leaf - 1) & 7)


cdef inline int _collect_leaves(const u8* tb, int* lx, int* ly, int* lz, int* lsize) nogil:
    """Leaves in payload order (level by level, ascending node index).

    The payload row of the n-th collected leaf is simply n, because
    data_index is a bijection onto 0..num_leaves-1 in this order.
    """
    cdef int n = 0, o1, o2, o3
    if tb[0] == 0:
        lx[0] = 0; ly[0] = 0; lz[0] = 0; lsize[0] = 8
        return 1
    for o1 in range(8):
        if tb[1 + o1] == 0:
            lx[n] = 4 * (o1 & 1); ly[n] = 4 * ((o1 >> 1) & 1); lz[n] = 4 * ((o1 >> 2) & 1)
            lsize[n] = 4
            n += 1
    for o1 in range(8):
        if tb[1 + o1]:
            for o2 in range(8):
                if tb[9 + 8 * o1 + o2] == 0:
                    lx[n] = 4 * (o1 & 1) + 2 * (o2 & 1)
                    ly[n] = 4 * ((o1 >> 1) & 1) + 2 * ((o2 >> 1) & 1)
                    lz[n] = 4 * ((o1 >> 2) & 1) + 2 * ((o2 >> 2) & 1)
                    lsize[n] = 2
                    n += 1
    for o1 in range(8):
        if tb[1 + o1]:
            for o2 in range(8):
                if tb[9 + 8 * o1 + o2]:
                    for o3 in range(8):
                        lx[n] = 4 * (o1 & 1) + 2 * (o2 & 1) + (o3 & 1)
                        ly[n] = 4 * ((o1 >> 1) & 1) + 2 * ((o2 >> 1) & 1) + ((o3 >> 1) & 1)
                        lz[n] = 4 * ((o1 >> 2) & 1) + 2 * ((o2 >> 2) & 1) + ((o3 >> 2) & 1)
                        lsize[n] = 1
                        n += 1
    return n


cdef inline i64 _row_at(const u8[:, ::1] bits, const i32[:, ::1] prefix, const i64[::1] base,
                        int h, int w, int gi, int gj, int gk) nogil:
    cdef int t = ((gi >> 3) * h + (gj >> 3)) * w + (gk >> 3)
    cdef int leaf = _leaf_of(&bits[t, 0], gi & 7, gj & 7, gk & 7)
    return base[t] + _data_idx(&prefix[t, 0], leaf)


def expand_values(const u8[:, ::1] bits, const i32[:, ::1] prefix, const i64[::1] base,
                  const f32[:, ::1] data, int d, int h, int w,
                  f32[:, :, :, ::1] out, int t0, int t1):
    cdef int t, td, th, tw, nleaf, li, c, vx, vy, vz, gi, gj, gk
    cdef int channels = data.shape[1]
    cdef int lx[512]
    cdef int ly[512]
    cdef int lz[512]
    cdef int ls[512]
    cdef i64 row
    cdef f32 v
    with nogil:
        for t in range(t0, t1):
            td = t // (h * w); th = (t // w) % h; tw = t % w
            nleaf = _collect_leaves(&bits[t, 0], lx, ly, lz, ls)
            for li in range(nleaf):
                row = base[t] + li
                for c in range(channels):
                    v = data[row, c]
                    for vx in range(ls[li]):
                        gi = 8 * td + lx[li] + vx
                        for vy in range(ls[li]):
                            gj = 8 * th + ly[li] + vy
                            for vz in range(ls[li]):
                                gk = 8 * tw + lz[li] + vz
                                out[c, gi, gj, gk] = v


def pool_values(const u8[:, ::1] bits, const i32[:, ::1] prefix, const i64[::1] base,
                const f32[:, :, :, ::1] tensor, int d, int h, int w,
                int pool_kind, f32[:, ::1] out_rows, int t0, int t1):
    cdef int t, td, th, tw, nleaf, li, c, vx, vy, vz, s
    cdef int channels = tensor.shape[0]
    cdef int lx[512]
    cdef int ly[512]
    cdef int lz[512]
    cdef int ls[512]
    cdef i64 row
    cdef f64 acc
    cdef f32 v, best
    with nogil:
        for t in range(t0, t1):
            td = t // (h * w); th = (t // w) % h; tw = t % w
            nleaf = _collect_leaves(&bits[t, 0], lx, ly, lz, ls)
            for li in range(nleaf):
                row = base[t] + li
                s = ls[li]
                for c in range(channels):
                    if pool_kind == 0:
                        best = tensor[c, 8 * td + lx[li], 8 * th + ly[li], 8 * tw + lz[li]]
                        for vx in range(s):
                            for vy in range(s):
                                for vz in range(s):
                                    v = tensor[c, 8 * td + lx[li] + vx, 8 * th + ly[li] + vy, 8 * tw + lz[li] + vz]
                                    if v > best:
                                        best = v
                        out_rows[row, c] = best
                    else:
                        acc = 0.0
                        for vx in range(s):
                            for vy in range(s):
                                for vz in range(s):
                                    acc += tensor[c, 8 * td + lx[li] + vx, 8 * th + ly[li] + vy, 8 * tw + lz[li] + vz]
                        out_rows[row, c] = <f32> (acc / (s * s * s))


cdef inline void _conv_at(const u8[:, ::1] bits, const i32[:, ::1] prefix, const i64[::1] base,
                          const f32[:, ::1] data, int h, int w, int res_x, int res_y, int res_z,
                          const f64[:, :, :, :, ::1] weights, const f64[::1] bias,
                          int gi, int gj, int gk, f64* accs) nogil:
    """Full kernel evaluation at one voxel: accs[co] = bias + sum of taps.

    Tap (l, m, n) reads the value at (gi - l + L//2, ...); out-of-grid taps
    contribute zero.  Accumulation order is c_in outer, then l, m, n.
    """
    cdef int co, ci, l, m, n, ti, tj, tk, tap
    cdef int n_out = weights.shape[0], n_in = weights.shape[1]
    cdef int kl = weights.shape[2], km = weights.shape[3], kn = weights.shape[4]
    cdef int rl = kl // 2, rm = km // 2, rn = kn // 2
    cdef i64 rows[MAX_TAPS]
    cdef f64 a
    tap = 0
    for l in range(kl):
        ti = gi - l + rl
        for m in range(km):
            tj = gj - m + rm
            for n in range(kn):
                tk = gk - n + rn
                if 0 <= ti < res_x and 0 <= tj < res_y and 0 <= tk < res_z:
                    rows[tap] = _row_at(bits, prefix, base, h, w, ti, tj, tk)
                else:
                    rows[tap] = -1
                tap += 1
    for co in range(n_out):
        a = bias[co]
        for ci in range(n_in):
            tap = 0
            for l in range(kl):
                for m in range(km):
                    for n in range(kn):
                        if rows[tap] >= 0:
                            a += weights[co, ci, l, m, n] * data[rows[tap], ci]
                        tap += 1
        accs[co] = a


def conv_naive_values(const u8[:, ::1] bits, const i32[:, ::1] prefix, const i64[::1] base,
                      const f32[:, ::1] data, int d, int h, int w,
                      const f64[:, :, :, :, ::1] weights, const f64[::1] bias,
                      int pool_kind, f32[:, ::1] out_rows, int t0, int t1):
    cdef int res_x = 8 * d, res_y = 8 * h, res_z = 8 * w
    cdef int n_out = weights.shape[0]
    cdef int t, td, th, tw, nleaf, li, s, vx, vy, vz, co
    cdef int lx[512]
    cdef int ly[512]
    cdef int lz[512]
    cdef int ls[512]
    cdef i64 row
    cdef f32 v
    cdef f64* accs = <f64*> malloc(n_out * sizeof(f64))
    cdef f64* pool_acc = <f64*> malloc(n_out * sizeof(f64))
    if accs == NULL or pool_acc == NULL:
        free(accs); free(pool_acc)
        raise MemoryError()
    try:
        with nogil:
            for t in range(t0, t1):
                td = t // (h * w); th = (t // w) % h; tw = t % w
                nleaf = _collect_leaves(&bits[t, 0], lx, ly, lz, ls)
                for li in range(nleaf):
                    row = base[t] + li
                    s = ls[li]
                    for co in range(n_out):
                        pool_acc[co] = -1e308 if pool_kind == 0 else 0.0
                    for vx in range(s):
                        for vy in range(s):
                            for vz in range(s):
                                _conv_at(bits, prefix, base, data, h, w, res_x, res_y, res_z,
                                         weights, bias,
                                         8 * td + lx[li] + vx, 8 * th + ly[li] + vy, 8 * tw + lz[li] + vz,
                                         accs)
                                for co in range(n_out):
                                    v = <f32> accs[co]
                                    if pool_kind == 0:
                                        if v > pool_acc[co]:
                                            pool_acc[co] = v
                                    else:
                                        pool_acc[co] += v
                    for co in range(n_out):
                        if pool_kind == 0:
                            out_rows[row, co] = <f32> pool_acc[co]
                        else:
                            out_rows[row, co] = <f32> (pool_acc[co] / (s * s * s))
    finally:
        free(accs); free(pool_acc)


def conv_efficient_values(const u8[:, ::1] bits, const i32[:, ::1] prefix, const i64[::1] base,
                          const f32[:, ::1] data, int d, int h, int w,
                          const f64[:, :, :, :, ::1] weights, const f64[::1] bias,
                          int pool_kind, f32[:, ::1] out_rows, int t0, int t1):
    cdef int res_x = 8 * d, res_y = 8 * h, res_z = 8 * w
    cdef int n_out = weights.shape[0], n_in = weights.shape[1]
    cdef int t, td, th, tw, nleaf, li, s, vx, vy, vz, co, ci, l, m, n, tap
    cdef int oi, oj, ok, la, lb, lc, ti, tj, tk, interior_n
    cdef int lx[512]
    cdef int ly[512]
    cdef int lz[512]
    cdef int ls[512]
    cdef i64 rows[27]
    cdef int incell[27]
    cdef i64 row, leaf_row
    cdef f32 v
    cdef f64 a
    cdef f64* accs = <f64*> malloc(n_out * sizeof(f64))
    cdef f64* pool_acc = <f64*> malloc(n_out * sizeof(f64))
    cdef f64* prods = <f64*> malloc(n_out * 27 * sizeof(f64))
    cdef f32* interior = <f32*> malloc(n_out * sizeof(f32))
    if accs == NULL or pool_acc == NULL or prods == NULL or interior == NULL:
        free(accs); free(pool_acc); free(prods); free(interior)
        raise MemoryError()
    if weights.shape[2] != 3 or weights.shape[3] != 3 or weights.shape[4] != 3:
        free(accs); free(pool_acc); free(prods); free(interior)
        raise ValueError("efficient path requires a 3x3x3 kernel")
    try:
        with nogil:
            for t in range(t0, t1):
                td = t // (h * w); th = (t // w) % h; tw = t % w
                nleaf = _collect_leaves(&bits[t, 0], lx, ly, lz, ls)
                for li in range(nleaf):
                    row = base[t] + li
                    s = ls[li]
                    for co in range(n_out):
                        pool_acc[co] = -1e308 if pool_kind == 0 else 0.0
                    if s <= 2:
                        for vx in range(s):
                            for vy in range(s):
                                for vz in range(s):
                                    _conv_at(bits, prefix, base, data, h, w, res_x, res_y, res_z,
                                             weights, bias,
                                             8 * td + lx[li] + vx, 8 * th + ly[li] + vy, 8 * tw + lz[li] + vz,
                                             accs)
                                    for co in range(n_out):
                                        v = <f32> accs[co]
                                        if pool_kind == 0:
                                            if v > pool_acc[co]:
                                                pool_acc[co] = v
                                        else:
                                            pool_acc[co] += v
                    else:
                        leaf_row = row
                        oi = 8 * td + lx[li]; oj = 8 * th + ly[li]; ok = 8 * tw + lz[li]
                        # Per-tap products of the kernel with the cell's
                        # constant value: every in-cell contribution below is
                        # a subset sum of these.
                        for co in range(n_out):
                            tap = 0
                            for l in range(3):
                                for m in range(3):
                                    for n in range(3):
                                        a = 0.0
                                        for ci in range(n_in):
                                            a += weights[co, ci, l, m, n] * data[leaf_row, ci]
                                        prods[co * 27 + tap] = a
                                        tap += 1
                        interior_n = (s - 2) * (s - 2) * (s - 2)
                        for co in range(n_out):
                            a = bias[co]
                            for tap in range(27):
                                a += prods[co * 27 + tap]
                            interior[co] = <f32> a
                            if pool_kind == 0:
                                if interior[co] > pool_acc[co]:
                                    pool_acc[co] = interior[co]
                            else:
                                pool_acc[co] += interior_n * <f64> interior[co]
                        for vx in range(s):
                            for vy in range(s):
                                for vz in range(s):
                                    if 0 < vx < s - 1 and 0 < vy < s - 1 and 0 < vz < s - 1:
                                        continue
                                    tap = 0
                                    for l in range(3):
                                        la = vx - l + 1
                                        for m in range(3):
                                            lb = vy - m + 1
                                            for n in range(3):
                                                lc = vz - n + 1
                                                if 0 <= la < s and 0 <= lb < s and 0 <= lc < s:
                                                    incell[tap] = 1
                                                else:
                                                    incell[tap] = 0
                                                    ti = oi + la; tj = oj + lb; tk = ok + lc
                                                    if 0 <= ti < res_x and 0 <= tj < res_y and 0 <= tk < res_z:
                                                        rows[tap] = _row_at(bits, prefix, base, h, w, ti, tj, tk)
                                                    else:
                                                        rows[tap] = -1
                                                tap += 1
                                    for co in range(n_out):
                                        a = bias[co]
                                        tap = 0
                                        for l in range(3):
                                            for m in range(3):
                                                for n in range(3):
                                                    if incell[tap]:
                                                        a += prods[co * 27 + tap]
                                                    elif rows[tap] >= 0:
                                                        for ci in range(n_in):
                                                            a += weights[co, ci, l, m, n] * data[rows[tap], ci]
                                                    tap += 1
                                        v = <f32> a
                                        if pool_kind == 0:
                                            if v > pool_acc[co]:
                                                pool_acc[co] = v
                                        else:
                                            pool_acc[co] += v
                    for co in range(n_out):
                        if pool_kind == 0:
                            out_rows[row, co] = <f32> pool_acc[co]
                        else:
                            out_rows[row, co] = <f32> (pool_acc[co] / (s * s * s))
    finally:
        free(accs); free(pool_acc); free(prods); free(interior)
