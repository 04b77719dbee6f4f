# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels. Semantics mirror ``_fallback`` exactly."""
import numpy as np
cimport numpy as cnp
from libc.math cimport floor, sqrt

cnp.import_array()


cdef inline void _coords(int start, int length, int out_len, Py_ssize_t[::1] lo,
                         Py_ssize_t[::1] hi, double[::1] frac) noexcept nogil:
    cdef double scale = <double>length / out_len
    cdef double pos
    cdef int k
    cdef Py_ssize_t last = start + length - 1
    for k in range(out_len):
        pos = start + (k + 0.5) * scale - 0.5
        if pos < start:
            pos = start
        elif pos > last:
            pos = last
        lo[k] = <Py_ssize_t>floor(pos)
        hi[k] = lo[k] + 1 if lo[k] + 1 <= last else last
        frac[k] = pos - lo[k]


cdef void _resample(const float[:, :] src, int top, int left, int height, int width,
                    bint flip, double brightness, double contrast, bint jitter,
                    bint clamp, float[:, ::1] out):
    cdef int out_h = out.shape[0]
    cdef int out_w = out.shape[1]
    cdef Py_ssize_t[::1] y0 = np.empty(out_h, dtype=np.intp)
    cdef Py_ssize_t[::1] y1 = np.empty(out_h, dtype=np.intp)
    cdef double[::1] wy = np.empty(out_h, dtype=np.float64)
    cdef Py_ssize_t[::1] x0 = np.empty(out_w, dtype=np.intp)
    cdef Py_ssize_t[::1] x1 = np.empty(out_w, dtype=np.intp)
    cdef double[::1] wx = np.empty(out_w, dtype=np.float64)
    cdef int i, j, jj
    cdef double fy, fx, a, b, c, d, top_row, bottom_row, v
    with nogil:
        _coords(top, height, out_h, y0, y1, wy)
        _coords(left, width, out_w, x0, x1, wx)
        for i in range(out_h):
            fy = wy[i]
            for j in range(out_w):
                jj = out_w - 1 - j if flip else j
                fx = wx[jj]
                a = src[y0[i], x0[jj]]
                b = src[y0[i], x1[jj]]
                c = src[y1[i], x0[jj]]
                d = src[y1[i], x1[jj]]
                top_row = (1.0 - fx) * a + fx * b
                bottom_row = (1.0 - fx) * c + fx * d
                v = (1.0 - fy) * top_row + fy * bottom_row
                if jitter:
                    v = ((v - 0.5) * contrast + 0.5) * brightness
                if clamp:
                    if v < 0.0:
                        v = 0.0
                    elif v > 1.0:
                        v = 1.0
                out[i, j] = <float>v


def crop_resize(src, int top, int left, int height, int width, int out_h, int out_w):
    cdef const float[:, :] s = np.asarray(src, dtype=np.float32)
    out = np.empty((out_h, out_w), dtype=np.float32)
    _resample(s, top, left, height, width, False, 1.0, 1.0, False, False, out)
    return out


def augment(src, int top, int left, int height, int width, bint flip,
            double brightness, double contrast):
    cdef const float[:, :] s = np.asarray(src, dtype=np.float32)
    out = np.empty((s.shape[0], s.shape[1]), dtype=np.float32)
    cdef bint jitter = brightness != 1.0 or contrast != 1.0
    _resample(s, top, left, height, width, flip, brightness, contrast, jitter, True, out)
    return out


def centered_cosine_mean(x):
    cdef const double[:, :] xs = np.ascontiguousarray(x, dtype=np.float64)
    cdef Py_ssize_t n = xs.shape[0]
    cdef Py_ssize_t dim = xs.shape[1]
    if n < 2:
        raise ValueError("need at least two rows")
    cdef double[:, ::1] unit = np.zeros((n, dim), dtype=np.float64)
    cdef Py_ssize_t i, j, k
    cdef double mean, norm, dot, total = 0.0
    with nogil:
        for i in range(n):
            mean = 0.0
            for k in range(dim):
                mean += xs[i, k]
            mean /= dim
            norm = 0.0
            for k in range(dim):
                unit[i, k] = xs[i, k] - mean
                norm += unit[i, k] * unit[i, k]
            norm = sqrt(norm)
            if norm > 0.0:
                for k in range(dim):
                    unit[i, k] /= norm
            else:
                for k in range(dim):
                    unit[i, k] = 0.0
        for i in range(n):
            for j in range(i + 1, n):
                dot = 0.0
                for k in range(dim):
                    dot += unit[i, k] * unit[j, k]
                total += dot
    return total / (n * (n - 1) / 2)


def mw_counts(int n, int m):
    if n < 0 or m < 0:
        raise ValueError("sizes must be non-negative")
    cdef Py_ssize_t size = n * m + 1
    cdef cnp.int64_t[:, ::1] prev = np.zeros((m + 1, size), dtype=np.int64)
    cdef cnp.int64_t[:, ::1] cur = np.zeros((m + 1, size), dtype=np.int64)
    cdef cnp.int64_t[:, ::1] tmp
    cdef Py_ssize_t i, j, u
    for j in range(m + 1):
        prev[j, 0] = 1
    for i in range(1, n + 1):
        cur[:, :] = 0
        cur[0, 0] = 1
        for j in range(1, m + 1):
            for u in range(size):
                cur[j, u] = cur[j - 1, u]
                if u >= j:
                    cur[j, u] += prev[j, u - j]
        tmp = prev
        prev = cur
        cur = tmp
    return np.asarray(prev[m]).copy()
