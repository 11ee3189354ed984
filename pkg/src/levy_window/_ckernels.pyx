# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
# distutils: language = c++
"""Compiled inner loops.  Signatures mirror :mod:`levy_window._pykernels`."""

import numpy as np
cimport numpy as cnp
from libc.math cimport atan, cos, sin, tan, fabs, pow, M_PI
from libcpp.algorithm cimport nth_element
from libcpp.vector cimport vector

cnp.import_array()


def cos_sum(const double[::1] u, const double[::1] amp, const double[::1] phase,
            const double[::1] z):
    cdef Py_ssize_t n = z.shape[0], m = u.shape[0], i, k
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    cdef double acc, zi
    with nogil:
        for i in range(n):
            zi = z[i]
            acc = 0.0
            for k in range(m):
                acc += amp[k] * cos(u[k] * zi + phase[k])
            o[i] = acc
    return out


def sin_sum(const double[::1] u, const double[::1] amp, const double[::1] phase,
            const double[::1] z):
    cdef Py_ssize_t n = z.shape[0], m = u.shape[0], i, k
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    cdef double acc, zi
    with nogil:
        for i in range(n):
            zi = z[i]
            acc = 0.0
            for k in range(m):
                acc += amp[k] * sin(u[k] * zi + phase[k])
            o[i] = acc
    return out


def cms_transform(const double[::1] v, const double[::1] w, double alpha, double beta):
    cdef Py_ssize_t n = v.shape[0], i
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    cdef double t = 0.0 if alpha == 2.0 else tan(M_PI * alpha / 2.0)
    cdef double b = 0.0
    cdef double s, va
    if beta != 0.0 and alpha != 2.0:
        b = atan(beta * t) / alpha
    s = pow(1.0 + beta * beta * t * t, 1.0 / (2.0 * alpha))
    with nogil:
        for i in range(n):
            va = alpha * (v[i] + b)
            o[i] = (s * sin(va) / pow(cos(v[i]), 1.0 / alpha)
                    * pow(cos(v[i] - va) / w[i], (1.0 - alpha) / alpha))
    return out


cdef double _median_inplace(vector[double]& buf) noexcept nogil:
    cdef size_t n = buf.size(), k = n // 2, j
    cdef double hi, lo
    nth_element(buf.begin(), buf.begin() + k, buf.end())
    hi = buf[k]
    if n % 2 == 1:
        return hi
    lo = buf[0]
    for j in range(1, k):
        if buf[j] > lo:
            lo = buf[j]
    return (lo + hi) / 2.0


def central_mass_counts(const double[::1] x, const cnp.int64_t[::1] horizons, double delta):
    cdef Py_ssize_t nh = horizons.shape[0], n = x.shape[0], j, k, h, m
    counts = np.zeros(nh, dtype=np.int64)
    centers = np.empty(nh, dtype=np.float64)
    cdef cnp.int64_t[::1] c = counts
    cdef double[::1] ctr = centers
    cdef vector[double] buf
    cdef double med
    cdef Py_ssize_t cnt
    with nogil:
        for j in range(nh):
            h = horizons[j]
            m = n - h
            buf.resize(m)
            for k in range(m):
                buf[k] = x[k + h] - x[k]
            med = _median_inplace(buf)
            ctr[j] = med
            cnt = 0
            for k in range(m):
                if fabs((x[k + h] - x[k]) - med) <= delta:
                    cnt += 1
            c[j] = cnt
    return counts, centers


def horizon_mad(const double[::1] x, const cnp.int64_t[::1] horizons):
    cdef Py_ssize_t nh = horizons.shape[0], n = x.shape[0], j, k, h, m
    out = np.empty(nh, dtype=np.float64)
    cdef double[::1] o = out
    cdef vector[double] buf
    cdef double med
    with nogil:
        for j in range(nh):
            h = horizons[j]
            m = n - h
            buf.resize(m)
            for k in range(m):
                buf[k] = x[k + h] - x[k]
            med = _median_inplace(buf)
            for k in range(m):
                buf[k] = fabs((x[k + h] - x[k]) - med)
            o[j] = _median_inplace(buf)
    return out
