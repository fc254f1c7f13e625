# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled distance kernels. Semantics must match _pykernels exactly."""

import numpy as np

cimport numpy as cnp


cdef long _lev(const int[::1] a, const int[::1] b, long[::1] prev, long[::1] cur):
    cdef Py_ssize_t n = a.shape[0]
    cdef Py_ssize_t m = b.shape[0]
    cdef Py_ssize_t i, j
    cdef long best, cand
    cdef int ai
    if n == 0:
        return m
    if m == 0:
        return n
    for j in range(m + 1):
        prev[j] = j
    for i in range(1, n + 1):
        cur[0] = i
        ai = a[i - 1]
        for j in range(1, m + 1):
            best = prev[j] + 1
            cand = cur[j - 1] + 1
            if cand < best:
                best = cand
            cand = prev[j - 1] + (0 if ai == b[j - 1] else 1)
            if cand < best:
                best = cand
            cur[j] = best
        prev, cur = cur, prev
    return prev[m]


def levenshtein(a, b):
    """Unit-cost edit distance between two integer id sequences."""
    cdef cnp.ndarray[int, ndim=1] aa = np.ascontiguousarray(a, dtype=np.intc)
    cdef cnp.ndarray[int, ndim=1] bb = np.ascontiguousarray(b, dtype=np.intc)
    cdef long m = bb.shape[0]
    cdef cnp.ndarray[long, ndim=1] prev = np.empty(m + 1, dtype=np.int64)
    cdef cnp.ndarray[long, ndim=1] cur = np.empty(m + 1, dtype=np.int64)
    return int(_lev(aa, bb, prev, cur))


def levenshtein_many(a, bs):
    """Edit distance from one id sequence to each sequence in `bs`."""
    cdef cnp.ndarray[int, ndim=1] aa = np.ascontiguousarray(a, dtype=np.intc)
    cdef Py_ssize_t k = len(bs)
    cdef cnp.ndarray[long, ndim=1] out = np.empty(k, dtype=np.int64)
    cdef Py_ssize_t maxm = 0
    cdef Py_ssize_t i
    for i in range(k):
        if len(bs[i]) > maxm:
            maxm = len(bs[i])
    cdef cnp.ndarray[long, ndim=1] prev = np.empty(maxm + 1, dtype=np.int64)
    cdef cnp.ndarray[long, ndim=1] cur = np.empty(maxm + 1, dtype=np.int64)
    cdef cnp.ndarray[int, ndim=1] bb
    for i in range(k):
        bb = np.ascontiguousarray(bs[i], dtype=np.intc)
        out[i] = _lev(aa, bb, prev, cur)
    return out
