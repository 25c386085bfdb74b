# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the kernels in ``_pykernels``."""

import numpy as np
cimport numpy as cnp

cnp.import_array()


def pairwise_iou(boxes):
    cdef cnp.ndarray[cnp.float64_t, ndim=2] b = np.ascontiguousarray(boxes, dtype=np.float64)
    if b.shape[1] != 4:
        raise ValueError(f"expected (n, 4) boxes, got shape {(<object>b).shape}")
    cdef Py_ssize_t n = b.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out = np.empty((n, n), dtype=np.float64)
    cdef double[:, ::1] bv = b
    cdef double[:, ::1] ov = out
    cdef Py_ssize_t i, j
    cdef double iw, ih, inter, ai, aj
    with nogil:
        for i in range(n):
            ai = (bv[i, 2] - bv[i, 0]) * (bv[i, 3] - bv[i, 1])
            for j in range(n):
                aj = (bv[j, 2] - bv[j, 0]) * (bv[j, 3] - bv[j, 1])
                iw = (bv[i, 2] if bv[i, 2] < bv[j, 2] else bv[j, 2]) - (bv[i, 0] if bv[i, 0] > bv[j, 0] else bv[j, 0])
                ih = (bv[i, 3] if bv[i, 3] < bv[j, 3] else bv[j, 3]) - (bv[i, 1] if bv[i, 1] > bv[j, 1] else bv[j, 1])
                if iw < 0.0:
                    iw = 0.0
                if ih < 0.0:
                    ih = 0.0
                inter = iw * ih
                ov[i, j] = inter / ((ai + aj) - inter)
    return out


def label_ranks(scores, labels):
    cdef cnp.ndarray[cnp.float64_t, ndim=2] s = np.ascontiguousarray(scores, dtype=np.float64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] lab = np.ascontiguousarray(labels, dtype=np.int64)
    cdef Py_ssize_t m = s.shape[0]
    cdef Py_ssize_t d = s.shape[1]
    if lab.shape[0] != m:
        raise ValueError("scores must be (m, d) and labels (m,)")
    cdef cnp.ndarray[cnp.int64_t, ndim=1] out = np.zeros(m, dtype=np.int64)
    if m == 0:
        return out
    if lab.min() < 1 or lab.max() >= d:
        raise ValueError("labels must index a non-NA column")
    cdef double[:, ::1] sv = s
    cdef cnp.int64_t[::1] lv = lab
    cdef cnp.int64_t[::1] rv = out
    cdef Py_ssize_t i, q
    cdef cnp.int64_t g, r
    cdef double own
    with nogil:
        for i in range(m):
            g = lv[i]
            own = sv[i, g]
            r = 0
            for q in range(1, d):
                if sv[i, q] > own or (sv[i, q] == own and q < g):
                    r += 1
            rv[i] = r
    return out
