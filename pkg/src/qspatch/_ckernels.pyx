# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled stopping-time walk.  Must agree bit for bit with ``_pykernels``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport fabs

cnp.import_array()


def hold(const double[::1] eta, double eps):
    cdef Py_ssize_t n = eta.shape[0]
    cdef Py_ssize_t j, m = 1
    cdef double anchor = eta[0]
    held_arr = np.empty(n, dtype=np.float64)
    cuts_arr = np.empty(n + 1, dtype=np.int64)
    cdef double[::1] held = held_arr
    cdef cnp.int64_t[::1] cuts = cuts_arr
    cuts[0] = 0
    held[0] = anchor
    for j in range(1, n - 1):
        if fabs(eta[j] - anchor) >= eps:
            anchor = eta[j]
            cuts[m] = j
            m += 1
        held[j] = anchor
    if n > 1:
        held[n - 1] = eta[n - 1]
        cuts[m] = n - 1
        m += 1
    return held_arr, cuts_arr[:m].copy()


def hold_levels(const double[::1] eta, const double[::1] levels):
    cdef Py_ssize_t n = eta.shape[0]
    cdef Py_ssize_t L = levels.shape[0]
    cdef Py_ssize_t i, j
    cdef double anchor, eps
    out_arr = np.empty((L, n), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    for i in range(L):
        eps = levels[i]
        anchor = eta[0]
        out[i, 0] = anchor
        for j in range(1, n - 1):
            if fabs(eta[j] - anchor) >= eps:
                anchor = eta[j]
            out[i, j] = anchor
        if n > 1:
            out[i, n - 1] = eta[n - 1]
    return out_arr
