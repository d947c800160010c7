# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops over clustered arrays.

Every routine walks clusters in dataset order and members in time order and
performs the same floating-point operations, in the same order, as the numpy
fallback in ``_pykernels``. Outputs of the two backends are bit-identical.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport fabs

cnp.import_array()

BACKEND = "cython"


def compensated_sum(const double[::1] values):
    cdef Py_ssize_t i, n = values.shape[0]
    cdef double s = 0.0, c = 0.0, t, v
    with nogil:
        for i in range(n):
            v = values[i]
            t = s + v
            if fabs(s) >= fabs(v):
                c += (s - t) + v
            else:
                c += (v - t) + s
            s = t
    return s + c


def segment_sums(const double[::1] values, const cnp.int64_t[::1] offsets):
    cdef Py_ssize_t G = offsets.shape[0] - 1
    out_arr = np.empty(G, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t g, i
    cdef double s, c, t, v
    with nogil:
        for g in range(G):
            s = 0.0
            c = 0.0
            for i in range(offsets[g], offsets[g + 1]):
                v = values[i]
                t = s + v
                if fabs(s) >= fabs(v):
                    c += (s - t) + v
                else:
                    c += (v - t) + s
                s = t
            out[g] = s + c
    return out_arr


def influence(const cnp.int8_t[::1] r, const double[::1] y,
              const double[::1] pi, const double[::1] mu):
    cdef Py_ssize_t i, n = r.shape[0]
    out_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] out = out_arr
    with nogil:
        for i in range(n):
            if r[i] == 1:
                out[i] = y[i] / pi[i] + mu[i] * (1.0 - 1.0 / pi[i])
            else:
                out[i] = mu[i]
    return out_arr


def ar1_paths(const double[::1] centre, const double[::1] e,
              const cnp.int64_t[::1] offsets, double rho,
              double first_scale, double step_scale):
    cdef Py_ssize_t G = offsets.shape[0] - 1
    cdef Py_ssize_t g, i
    out_arr = np.empty(e.shape[0], dtype=np.float64)
    cdef double[::1] out = out_arr
    with nogil:
        for g in range(G):
            i = offsets[g]
            out[i] = centre[i] + first_scale * e[i]
            for i in range(offsets[g] + 1, offsets[g + 1]):
                out[i] = centre[i] + rho * (out[i - 1] - centre[i]) + step_scale * e[i]
    return out_arr


def ar2_paths(const double[:, ::1] e, const cnp.int64_t[::1] offsets,
              const double[:, ::1] a1, const double[:, ::1] a2):
    cdef Py_ssize_t G = offsets.shape[0] - 1
    cdef Py_ssize_t q = e.shape[1]
    cdef Py_ssize_t g, i, k, j, pos
    cdef double acc, prev1, prev2
    out_arr = np.empty((e.shape[0], q), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    with nogil:
        for g in range(G):
            for i in range(offsets[g], offsets[g + 1]):
                pos = i - offsets[g]
                for k in range(q):
                    acc = 0.0
                    for j in range(q):
                        prev1 = out[i - 1, j] if pos >= 1 else 0.0
                        acc = acc + a1[k, j] * prev1
                    for j in range(q):
                        prev2 = out[i - 2, j] if pos >= 2 else 0.0
                        acc = acc + a2[k, j] * prev2
                    out[i, k] = acc + e[i, k]
    return out_arr


def running_extrema(const double[:, ::1] w, const cnp.int64_t[::1] offsets):
    cdef Py_ssize_t G = offsets.shape[0] - 1
    cdef Py_ssize_t q = w.shape[1]
    cdef Py_ssize_t g, i, k
    cdef double mx, mn, v
    mx_arr = np.empty(w.shape[0], dtype=np.float64)
    mn_arr = np.empty(w.shape[0], dtype=np.float64)
    cdef double[::1] omx = mx_arr
    cdef double[::1] omn = mn_arr
    with nogil:
        for g in range(G):
            i = offsets[g]
            mx = w[i, 0]
            mn = w[i, 0]
            for i in range(offsets[g], offsets[g + 1]):
                for k in range(q):
                    v = w[i, k]
                    if v > mx:
                        mx = v
                    if v < mn:
                        mn = v
                omx[i] = mx
                omn[i] = mn
    return mx_arr, mn_arr


def running_mean(const double[:, ::1] w, const cnp.int64_t[::1] offsets):
    cdef Py_ssize_t G = offsets.shape[0] - 1
    cdef Py_ssize_t q = w.shape[1]
    cdef Py_ssize_t g, i, k
    out_arr = np.empty((w.shape[0], q), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    acc_arr = np.zeros(q, dtype=np.float64)
    cdef double[::1] acc = acc_arr
    with nogil:
        for g in range(G):
            for k in range(q):
                acc[k] = 0.0
            for i in range(offsets[g], offsets[g + 1]):
                for k in range(q):
                    acc[k] = acc[k] + w[i, k]
                    out[i, k] = acc[k] / <double>(i - offsets[g] + 1)
    return out_arr


def window_mean(const double[:, ::1] w, const cnp.int64_t[::1] offsets, Py_ssize_t d):
    cdef Py_ssize_t G = offsets.shape[0] - 1
    cdef Py_ssize_t q = w.shape[1]
    cdef Py_ssize_t g, i, k, s, lo
    cdef double acc
    out_arr = np.empty((w.shape[0], q), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    with nogil:
        for g in range(G):
            for i in range(offsets[g], offsets[g + 1]):
                lo = i - d + 1
                if lo < offsets[g]:
                    lo = offsets[g]
                for k in range(q):
                    acc = 0.0
                    for s in range(lo, i + 1):
                        acc = acc + w[s, k]
                    out[i, k] = acc / <double>(i - lo + 1)
    return out_arr


def past_means(const double[::1] v, const cnp.int64_t[::1] offsets):
    cdef Py_ssize_t G = offsets.shape[0] - 1
    cdef Py_ssize_t g, i, pos
    cdef double acc
    out_arr = np.empty(v.shape[0], dtype=np.float64)
    cdef double[::1] out = out_arr
    with nogil:
        for g in range(G):
            acc = 0.0
            for i in range(offsets[g], offsets[g + 1]):
                pos = i - offsets[g]
                if pos == 0:
                    out[i] = 0.0
                else:
                    out[i] = acc / <double>pos
                acc = acc + v[i]
    return out_arr
