# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled network-loading kernels; same contracts as the numpy fallback."""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log

cnp.import_array()

ctypedef cnp.int64_t idx_t


def route_costs(const double[::1] link_cost, const idx_t[::1] route_ptr, const idx_t[::1] route_links):
    cdef Py_ssize_t n = route_ptr.shape[0] - 1
    cdef Py_ssize_t k, j
    cdef double acc
    out = np.empty(n)
    cdef double[::1] c = out
    for k in range(n):
        acc = 0.0
        for j in range(route_ptr[k], route_ptr[k + 1]):
            acc += link_cost[route_links[j]]
        c[k] = acc
    return out


def link_loads(const double[::1] f, const idx_t[::1] route_ptr, const idx_t[::1] route_links, Py_ssize_t n_links):
    cdef Py_ssize_t n = route_ptr.shape[0] - 1
    cdef Py_ssize_t k, j
    out = np.zeros(n_links)
    cdef double[::1] x = out
    for k in range(n):
        for j in range(route_ptr[k], route_ptr[k + 1]):
            x[route_links[j]] += f[k]
    return out


def segment_sums(const double[::1] values, const idx_t[::1] seg_ptr):
    cdef Py_ssize_t n = seg_ptr.shape[0] - 1
    cdef Py_ssize_t i, j
    cdef double acc
    out = np.empty(n)
    cdef double[::1] s = out
    for i in range(n):
        acc = 0.0
        for j in range(seg_ptr[i], seg_ptr[i + 1]):
            acc += values[j]
        s[i] = acc
    return out


cdef void _softmin(const double[::1] values, const idx_t[::1] seg_ptr, double theta,
                   double[::1] v, double[::1] shares) noexcept nogil:
    cdef Py_ssize_t n = seg_ptr.shape[0] - 1
    cdef Py_ssize_t i, j
    cdef double low, total
    for i in range(n):
        low = values[seg_ptr[i]]
        for j in range(seg_ptr[i] + 1, seg_ptr[i + 1]):
            if values[j] < low:
                low = values[j]
        total = 0.0
        for j in range(seg_ptr[i], seg_ptr[i + 1]):
            shares[j] = exp(-theta * (values[j] - low))
            total += shares[j]
        for j in range(seg_ptr[i], seg_ptr[i + 1]):
            shares[j] = shares[j] / total
        v[i] = low - log(total) / theta


def segment_softmin(const double[::1] values, const idx_t[::1] seg_ptr, double theta):
    v = np.empty(seg_ptr.shape[0] - 1)
    shares = np.empty(values.shape[0])
    _softmin(values, seg_ptr, theta, v, shares)
    return v, shares


def nested_logit(const double[::1] link_cost, const double[::1] dest_util, const double[::1] demand,
                 const idx_t[::1] route_ptr, const idx_t[::1] route_links, const idx_t[::1] od_ptr,
                 double alpha, double gamma):
    cdef Py_ssize_t n_dest = dest_util.shape[0]
    cdef Py_ssize_t n_orig = demand.shape[0]
    cdef Py_ssize_t n_od = n_orig * n_dest
    cdef Py_ssize_t n_routes = route_ptr.shape[0] - 1
    cdef Py_ssize_t r, s, k, j, od
    cdef double acc, low, total

    c_arr = np.empty(n_routes)
    v_arr = np.empty(n_od)
    q_arr = np.empty(n_od)
    f_arr = np.empty(n_routes)
    cdef double[::1] c = c_arr
    cdef double[::1] v = v_arr
    cdef double[::1] q = q_arr
    cdef double[::1] f = f_arr

    with nogil:
        for k in range(n_routes):
            acc = 0.0
            for j in range(route_ptr[k], route_ptr[k + 1]):
                acc += link_cost[route_links[j]]
            c[k] = acc
        _softmin(c, od_ptr, alpha, v, f)
        for r in range(n_orig):
            # destination utilities for origin r, shifted by the best one
            low = v[r * n_dest] - dest_util[0]
            for s in range(1, n_dest):
                if v[r * n_dest + s] - dest_util[s] < low:
                    low = v[r * n_dest + s] - dest_util[s]
            total = 0.0
            for s in range(n_dest):
                q[r * n_dest + s] = exp(-gamma * (v[r * n_dest + s] - dest_util[s] - low))
                total += q[r * n_dest + s]
            for s in range(n_dest):
                q[r * n_dest + s] = q[r * n_dest + s] / total * demand[r]
        for od in range(n_od):
            for k in range(od_ptr[od], od_ptr[od + 1]):
                f[k] = f[k] * q[od]
    return c_arr, v_arr, q_arr, f_arr
