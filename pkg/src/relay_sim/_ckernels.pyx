# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops.  Signatures mirror ``_pykernels`` exactly."""

import numpy as np
cimport numpy as cnp

cnp.import_array()

ctypedef cnp.float64_t f64
ctypedef cnp.int64_t i64

cdef double INF = float("inf")


def chain_argmax(const f64[::1] x, const f64[::1] h, Py_ssize_t start,
                 double x0, double y0, Py_ssize_t n_hops, double absorb_level,
                 i64[::1] out_idx):
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t k, j, best, cur = -1
    cdef double px = x0, py = y0, s, bs
    for k in range(n_hops):
        if cur >= 0 and h[cur] >= absorb_level:
            out_idx[k] = cur
            continue
        best = -1
        bs = -INF
        j = start if cur < 0 else cur + 1
        while j < n:
            s = (h[j] - py) / (x[j] - px)
            if s > bs:
                bs = s
                best = j
            j += 1
        if best < 0:
            return k
        out_idx[k] = best
        cur = best
        px = x[best]
        py = h[best]
    return n_hops


def batch_chain_argmax(const f64[:, ::1] X, const f64[:, ::1] H, const i64[::1] start_col,
                       const f64[::1] x0, const f64[::1] y0,
                       Py_ssize_t n_hops, double absorb_level,
                       i64[:, ::1] out_idx, i64[::1] out_count):
    """Chains of slope argmaxes, row ``r`` scanning columns from ``start_col[r]``."""
    cdef Py_ssize_t B = X.shape[0], K = X.shape[1]
    cdef Py_ssize_t r, k, j, best, cur
    cdef double px, py, s, bs
    for r in range(B):
        cur = start_col[r] - 1
        px = x0[r]
        py = y0[r]
        out_count[r] = n_hops
        for k in range(n_hops):
            if k > 0 and H[r, cur] >= absorb_level:
                out_idx[r, k] = cur
                continue
            best = -1
            bs = -INF
            for j in range(cur + 1, K):
                s = (H[r, j] - py) / (X[r, j] - px)
                if s > bs:
                    bs = s
                    best = j
            if best < 0:
                out_count[r] = k
                for j in range(k, n_hops):
                    out_idx[r, j] = -1
                break
            out_idx[r, k] = best
            cur = best
            px = X[r, best]
            py = H[r, best]


def hull_parents(const f64[::1] x, const f64[::1] h, i64[::1] out_parent):
    """Blocking building of every building among those to its right.

    Right-to-left upper-hull sweep; ties resolve to the nearest building.
    """
    cdef Py_ssize_t n = x.shape[0]
    cdef i64[::1] stack = np.empty(n, dtype=np.int64)
    cdef Py_ssize_t top = 0, i, a, b
    for i in range(n - 1, -1, -1):
        while top >= 2:
            a = stack[top - 1]
            b = stack[top - 2]
            if (h[b] - h[i]) * (x[a] - x[i]) > (h[a] - h[i]) * (x[b] - x[i]):
                top -= 1
            else:
                break
        out_parent[i] = stack[top - 1] if top > 0 else -1
        stack[top] = i
        top += 1


def range_targets(const f64[::1] x, const f64[::1] h, const f64[::1] qx,
                  const f64[::1] qy, double R, i64[::1] out):
    """Argmax of slope over buildings with base in ``(qx, qx + R]`` for each query."""
    cdef Py_ssize_t n = x.shape[0], m = qx.shape[0]
    cdef Py_ssize_t q, j, lo, hi, mid, best
    cdef double s, bs, lim
    for q in range(m):
        lo = 0
        hi = n
        while lo < hi:
            mid = (lo + hi) >> 1
            if x[mid] <= qx[q]:
                lo = mid + 1
            else:
                hi = mid
        lim = qx[q] + R
        best = -1
        bs = -INF
        j = lo
        while j < n and x[j] <= lim:
            s = (h[j] - qy[q]) / (x[j] - qx[q])
            if s > bs:
                bs = s
                best = j
            j += 1
        out[q] = best


def batch_range_chain(const f64[:, ::1] X, const f64[:, ::1] H,
                      const f64[::1] x0, const f64[::1] y0, double R,
                      Py_ssize_t max_hops, i64[:, ::1] out_idx,
                      i64[::1] out_count, i64[::1] out_status):
    """Horizontal finite-range chains.  status: 1 cemetery, 2 window exhausted, 3 hop cap."""
    cdef Py_ssize_t B = X.shape[0], K = X.shape[1]
    cdef Py_ssize_t r, k, j, best, cur
    cdef double px, py, s, bs, lim
    for r in range(B):
        cur = -1
        px = x0[r]
        py = y0[r]
        out_status[r] = 3
        out_count[r] = max_hops
        for k in range(max_hops):
            lim = px + R
            if lim > X[r, K - 1]:
                out_status[r] = 2
                out_count[r] = k
                break
            best = -1
            bs = -INF
            j = cur + 1
            while j < K and X[r, j] <= lim:
                s = (H[r, j] - py) / (X[r, j] - px)
                if s > bs:
                    bs = s
                    best = j
                j += 1
            if best < 0:
                out_status[r] = 1
                out_count[r] = k
                break
            out_idx[r, k] = best
            cur = best
            px = X[r, best]
            py = H[r, best]


def batch_general_first(const f64[:, ::1] X, const f64[:, ::1] H,
                        const f64[:, ::1] UP, const f64[:, ::1] LOW,
                        const f64[::1] x0, const f64[::1] y0, const f64[::1] cap,
                        i64[::1] out_idx, i64[::1] out_stop, i64[::1] out_status):
    """First blocking building under a general convex range.

    status: 0 resolved before the cap or at a stoppage building, 2 window exhausted.
    ``out_stop`` is the index of the stoppage building or -1 (cap reached).
    """
    cdef Py_ssize_t B = X.shape[0], K = X.shape[1]
    cdef Py_ssize_t r, j, best
    cdef double s, bs
    for r in range(B):
        best = -1
        bs = -INF
        out_stop[r] = -1
        out_status[r] = 2
        for j in range(K):
            if X[r, j] > cap[r]:
                out_status[r] = 0
                break
            if H[r, j] > UP[r, j]:
                out_stop[r] = j
                out_status[r] = 0
                break
            if H[r, j] >= LOW[r, j]:
                s = (H[r, j] - y0[r]) / (X[r, j] - x0[r])
                if s > bs:
                    bs = s
                    best = j
        out_idx[r] = best
