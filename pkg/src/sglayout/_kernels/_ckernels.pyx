# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled twins of the kernels in ``_fallback``. Keep the arithmetic identical."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, fabs

cnp.import_array()


def segment_sum(values, index, Py_ssize_t n):
    arr = np.ascontiguousarray(values, dtype=np.float64)
    shape = (n,) + arr.shape[1:]
    cdef double[:, ::1] v = arr.reshape(arr.shape[0], int(np.prod(arr.shape[1:], dtype=np.int64)))
    cdef long long[::1] idx = np.ascontiguousarray(index, dtype=np.int64)
    out_arr = np.zeros((n, v.shape[1]), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t rows = v.shape[0], cols = v.shape[1], r, c, t
    if idx.shape[0] != rows:
        raise ValueError(f"index length {idx.shape[0]} != {rows} rows")
    for r in range(rows):
        t = idx[r]
        if t < 0 or t >= n:
            raise IndexError(f"segment index {t} out of range for {n} segments")
    with nogil:
        for r in range(rows):
            t = idx[r]
            for c in range(cols):
                out[t, c] = out[t, c] + v[r, c]
    return out_arr.reshape(shape)


def relative_geometry(bj, bk, double eps=0.0):
    cdef double[:, ::1] a = np.ascontiguousarray(bj, dtype=np.float64)
    cdef double[:, ::1] b = np.ascontiguousarray(bk, dtype=np.float64)
    cdef Py_ssize_t m = a.shape[0], i
    scale_arr = np.empty(m, dtype=np.float64)
    dist_arr = np.empty((m, 2), dtype=np.float64)
    cdef double[::1] scale = scale_arr
    cdef double[:, ::1] dist = dist_arr
    cdef double dj, dk, den
    with nogil:
        for i in range(m):
            dj = sqrt(a[i, 2] * a[i, 2] + a[i, 3] * a[i, 3]) + eps
            dk = sqrt(b[i, 2] * b[i, 2] + b[i, 3] * b[i, 3]) + eps
            den = dj + dk
            scale[i] = dj / dk
            dist[i, 0] = fabs(a[i, 0] - b[i, 0]) / den
            dist[i, 1] = (a[i, 1] - b[i, 1]) / den
    return scale_arr, dist_arr


def box_iou(a_in, b_in):
    cdef double[:, ::1] a = np.ascontiguousarray(a_in, dtype=np.float64)
    cdef double[:, ::1] b = np.ascontiguousarray(b_in, dtype=np.float64)
    cdef Py_ssize_t m = a.shape[0], i
    out_arr = np.empty(m, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef double ax0, ax1, ay0, ay1, bx0, bx1, by0, by1, iw, ih, inter, union
    with nogil:
        for i in range(m):
            ax0 = a[i, 0] - a[i, 2] * 0.5
            ax1 = a[i, 0] + a[i, 2] * 0.5
            ay0 = a[i, 1] - a[i, 3] * 0.5
            ay1 = a[i, 1] + a[i, 3] * 0.5
            bx0 = b[i, 0] - b[i, 2] * 0.5
            bx1 = b[i, 0] + b[i, 2] * 0.5
            by0 = b[i, 1] - b[i, 3] * 0.5
            by1 = b[i, 1] + b[i, 3] * 0.5
            iw = (ax1 if ax1 < bx1 else bx1) - (ax0 if ax0 > bx0 else bx0)
            ih = (ay1 if ay1 < by1 else by1) - (ay0 if ay0 > by0 else by0)
            if iw < 0.0:
                iw = 0.0
            if ih < 0.0:
                ih = 0.0
            inter = iw * ih
            union = a[i, 2] * a[i, 3] + b[i, 2] * b[i, 3] - inter
            out[i] = inter / union if union > 0.0 else 0.0
    return out_arr
