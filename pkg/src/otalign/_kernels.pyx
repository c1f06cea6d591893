# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops. Semantics must match otalign._kernels_py exactly."""

import numpy as np
cimport numpy as cnp
from cython.parallel cimport prange
from libc.math cimport fabs, INFINITY

cnp.import_array()


def l1_cdist(a, b, int n_threads=1):
    cdef const double[:, ::1] A = np.ascontiguousarray(a, dtype=np.float64)
    cdef const double[:, ::1] B = np.ascontiguousarray(b, dtype=np.float64)
    cdef Py_ssize_t n = A.shape[0], m = B.shape[0], d = A.shape[1]
    if B.shape[1] != d:
        raise ValueError(f"dimension mismatch: {d} vs {B.shape[1]}")
    out = np.empty((n, m), dtype=np.float64)
    cdef double[:, ::1] O = out
    cdef Py_ssize_t i, j, k
    cdef double acc
    if n_threads < 1:
        n_threads = 1
    for i in prange(n, nogil=True, num_threads=n_threads, schedule="static"):
        for j in range(m):
            acc = 0.0
            for k in range(d):
                acc = acc + fabs(A[i, k] - B[j, k])
            O[i, j] = acc
    return out


def l1_pair_backward(h, a_idx, b_idx, weights, out):
    """out[a] += w * sign(h[a] - h[b]); out[b] -= the same, pair by pair."""
    cdef const double[:, ::1] H = np.ascontiguousarray(h, dtype=np.float64)
    cdef const cnp.int64_t[::1] A = np.ascontiguousarray(a_idx, dtype=np.int64)
    cdef const cnp.int64_t[::1] B = np.ascontiguousarray(b_idx, dtype=np.int64)
    cdef const double[::1] W = np.ascontiguousarray(weights, dtype=np.float64)
    cdef double[:, ::1] O = out
    cdef Py_ssize_t p, k, ia, ib, d = H.shape[1]
    cdef double w, diff, s
    for p in range(A.shape[0]):
        w = W[p]
        if w == 0.0:
            continue
        ia = A[p]
        ib = B[p]
        for k in range(d):
            diff = H[ia, k] - H[ib, k]
            if diff > 0.0:
                s = w
            elif diff < 0.0:
                s = -w
            else:
                continue
            O[ia, k] += s
            O[ib, k] -= s
    return out


def greedy_match(cost, double theta, int max_rounds=50):
    """Rows are sources, columns targets. Returns (rows, cols, rounds, capped)."""
    cdef const double[:, ::1] C = np.ascontiguousarray(cost, dtype=np.float64)
    cdef Py_ssize_t n = C.shape[0], m = C.shape[1]
    cdef Py_ssize_t i, j, best
    cdef double bv, v
    cdef int rounds = 0
    cdef bint capped = False, found

    alive_arr = np.ones(n, dtype=np.uint8)
    free_arr = np.ones(m, dtype=np.uint8)
    pcol_arr = np.full(n, -1, dtype=np.int64)
    pval_arr = np.zeros(n, dtype=np.float64)
    owner_arr = np.full(m, -1, dtype=np.int64)
    match_arr = np.full(n, -1, dtype=np.int64)
    cdef cnp.uint8_t[::1] alive = alive_arr
    cdef cnp.uint8_t[::1] free = free_arr
    cdef cnp.int64_t[::1] pcol = pcol_arr
    cdef double[::1] pval = pval_arr
    cdef cnp.int64_t[::1] owner = owner_arr
    cdef cnp.int64_t[::1] match = match_arr

    while True:
        found = False
        for i in range(n):
            pcol[i] = -1
            if not alive[i]:
                continue
            best = -1
            bv = INFINITY
            for j in range(m):
                if free[j]:
                    v = C[i, j]
                    if v < bv:
                        bv = v
                        best = j
            if best >= 0 and bv < theta:
                pcol[i] = best
                pval[i] = bv
                found = True
            else:
                # targets only shrink, so this row can never match again
                alive[i] = 0
        if not found:
            break
        if rounds == max_rounds:
            capped = True
            break
        rounds += 1
        for i in range(n):
            j = pcol[i]
            if j < 0:
                continue
            if owner[j] < 0 or pval[i] < pval[owner[j]]:
                owner[j] = i
        for j in range(m):
            i = owner[j]
            if i >= 0:
                match[i] = j
                alive[i] = 0
                free[j] = 0
                owner[j] = -1

    rows = np.flatnonzero(match_arr >= 0)
    return rows, match_arr[rows].copy(), rounds, capped
