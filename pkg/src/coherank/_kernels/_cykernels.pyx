# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled implementations of the hot kernels (see _pykernels for the fallback)."""

import numpy as np

cimport numpy as cnp

cnp.import_array()

cdef cnp.uint64_t FNV_OFFSET = 14695981039346656037UL
cdef cnp.uint64_t FNV_PRIME_C = 1099511628211UL

FNV_OFFSET_BASIS = FNV_OFFSET
FNV_PRIME = FNV_PRIME_C


cdef inline cnp.uint64_t _fnv1a(const unsigned char* data, Py_ssize_t n) nogil:
    cdef cnp.uint64_t h = FNV_OFFSET
    cdef Py_ssize_t i
    for i in range(n):
        h = (h ^ <cnp.uint64_t>data[i]) * FNV_PRIME_C
    return h


def fnv1a64(bytes data):
    """64-bit FNV-1a hash of a byte string."""
    return int(_fnv1a(<const unsigned char*>data, len(data)))


def hash_buckets(list tokens, n_buckets):
    """FNV-1a hash each byte-string token into a bucket index in [0, n_buckets)."""
    cdef Py_ssize_t n = len(tokens)
    cdef cnp.uint64_t buckets = <cnp.uint64_t>n_buckets
    out = np.empty(n, dtype=np.int64)
    cdef cnp.int64_t[::1] view = out
    cdef bytes tok
    cdef Py_ssize_t i
    for i in range(n):
        tok = tokens[i]
        view[i] = <cnp.int64_t>(_fnv1a(<const unsigned char*>tok, len(tok)) % buckets)
    return out


def bag_mean_forward(const double[:, ::1] weights, const cnp.int64_t[::1] indices,
                     const cnp.int64_t[::1] offsets):
    """Per-group mean of weight rows; every group must be non-empty."""
    cdef Py_ssize_t n_groups = offsets.shape[0] - 1
    cdef Py_ssize_t dim = weights.shape[1]
    out = np.zeros((n_groups, dim), dtype=np.float64)
    cdef double[:, ::1] ov = out
    cdef Py_ssize_t g, i, j
    cdef cnp.int64_t lo, hi, row
    cdef double inv
    for g in range(n_groups):
        lo = offsets[g]
        hi = offsets[g + 1]
        if hi <= lo:
            raise ValueError("empty group in bag_mean_forward")
        for i in range(lo, hi):
            row = indices[i]
            for j in range(dim):
                ov[g, j] += weights[row, j]
        inv = 1.0 / <double>(hi - lo)
        for j in range(dim):
            ov[g, j] *= inv
    return out


def bag_mean_backward(const double[:, ::1] grad_out, const cnp.int64_t[::1] indices,
                      const cnp.int64_t[::1] offsets, n_rows):
    """Scatter-accumulate group gradients back to the weight rows."""
    cdef Py_ssize_t n_groups = offsets.shape[0] - 1
    cdef Py_ssize_t dim = grad_out.shape[1]
    grad_w = np.zeros((int(n_rows), dim), dtype=np.float64)
    cdef double[:, ::1] gv = grad_w
    cdef Py_ssize_t g, i, j
    cdef cnp.int64_t lo, hi, row
    cdef double inv
    for g in range(n_groups):
        lo = offsets[g]
        hi = offsets[g + 1]
        inv = 1.0 / <double>(hi - lo)
        for i in range(lo, hi):
            row = indices[i]
            for j in range(dim):
                gv[row, j] += grad_out[g, j] * inv
    return grad_w


cdef inline bint _worse(double s_a, cnp.int64_t i_a, double s_b, cnp.int64_t i_b) nogil:
    """True when (s_a, i_a) ranks strictly below (s_b, i_b)."""
    if s_a != s_b:
        return s_a < s_b
    return i_a > i_b


def topk_indices(const double[::1] scores, k):
    """Indices of the k largest scores, ordered by (score desc, index asc).

    Keeps a binary min-heap of the current best k; an entry beats the heap
    root when its score is higher, or equal with a smaller index.
    """
    cdef Py_ssize_t m = scores.shape[0]
    cdef Py_ssize_t kk = min(int(k), m)
    if kk <= 0:
        return np.empty(0, dtype=np.int64)

    heap_scores = np.empty(kk, dtype=np.float64)
    heap_idx = np.empty(kk, dtype=np.int64)
    cdef double[::1] hs = heap_scores
    cdef cnp.int64_t[::1] hi_ = heap_idx
    cdef Py_ssize_t size = 0, pos, child, parent, i
    cdef double s, ts
    cdef cnp.int64_t ix, ti

    for i in range(m):
        s = scores[i]
        if size < kk:
            # sift up
            pos = size
            hs[pos] = s
            hi_[pos] = i
            size += 1
            while pos > 0:
                parent = (pos - 1) >> 1
                if _worse(hs[pos], hi_[pos], hs[parent], hi_[parent]):
                    ts = hs[pos]; hs[pos] = hs[parent]; hs[parent] = ts
                    ti = hi_[pos]; hi_[pos] = hi_[parent]; hi_[parent] = ti
                    pos = parent
                else:
                    break
        elif not _worse(s, i, hs[0], hi_[0]):
            # replace root, sift down
            hs[0] = s
            hi_[0] = i
            pos = 0
            while True:
                child = 2 * pos + 1
                if child >= kk:
                    break
                if child + 1 < kk and _worse(hs[child + 1], hi_[child + 1], hs[child], hi_[child]):
                    child += 1
                if _worse(hs[child], hi_[child], hs[pos], hi_[pos]):
                    ts = hs[pos]; hs[pos] = hs[child]; hs[child] = ts
                    ti = hi_[pos]; hi_[pos] = hi_[child]; hi_[child] = ti
                    pos = child
                else:
                    break

    order = np.lexsort((heap_idx, -heap_scores))
    return heap_idx[order]
