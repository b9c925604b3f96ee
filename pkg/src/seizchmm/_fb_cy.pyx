# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled forward-backward kernel for one 3-state progression chain.

Mirrors ``_fb_py.chain_forward_backward`` exactly; see that module for the
contract.  This is the hot loop of the variational E-step: it runs once per
channel per sweep per EM iteration.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, isfinite, log

from .errors import NumericalError

cnp.import_array()


def chain_forward_backward(logw0, logw1, g, h):
    """Smoothed marginals (gamma, xi, logz) of a single scaled 3-state chain."""
    cdef double[::1] lw0 = np.ascontiguousarray(logw0, dtype=np.float64)
    cdef double[::1] lw1 = np.ascontiguousarray(logw1, dtype=np.float64)
    cdef double[::1] gv = np.ascontiguousarray(g, dtype=np.float64)
    cdef double[::1] hv = np.ascontiguousarray(h, dtype=np.float64)
    cdef Py_ssize_t n = lw0.shape[0]
    cdef Py_ssize_t t_steps = n - 1
    if lw1.shape[0] != n or gv.shape[0] != t_steps or hv.shape[0] != t_steps:
        raise ValueError("inconsistent chain lengths")

    w0_arr = np.empty(n)
    w1_arr = np.empty(n)
    scale_arr = np.empty(n)
    gamma_arr = np.empty((n, 3))
    xi_arr = np.zeros((t_steps, 3, 3))
    ahat_arr = np.empty((n, 3))
    cdef double[::1] w0 = w0_arr
    cdef double[::1] w1 = w1_arr
    cdef double[::1] scale = scale_arr
    cdef double[:, ::1] gamma = gamma_arr
    cdef double[:, :, ::1] xi = xi_arr
    cdef double[:, ::1] ahat = ahat_arr

    cdef double logz = 0.0
    cdef double m, a0, a1, a2, c, gt, ht, p0, p1, p2
    cdef double b0, b1, b2, nb0, nb1, nb2, e0, e1, e2
    cdef Py_ssize_t t

    for t in range(n):
        m = lw0[t] if lw0[t] >= lw1[t] else lw1[t]
        if not isfinite(m):
            raise NumericalError(f"non-finite data weight at frame {t}")
        w0[t] = exp(lw0[t] - m)
        w1[t] = exp(lw1[t] - m)
        if t == 0:
            a0 = w0[0]
            a1 = 0.0
            a2 = 0.0
        else:
            p0 = ahat[t - 1, 0]
            p1 = ahat[t - 1, 1]
            p2 = ahat[t - 1, 2]
            gt = gv[t - 1]
            ht = hv[t - 1]
            a0 = w0[t] * p0 * (1.0 - gt)
            a1 = w1[t] * (p0 * gt + p1 * (1.0 - ht))
            a2 = w0[t] * (p1 * ht + p2)
        c = a0 + a1 + a2
        if c <= 0.0 or not isfinite(c):
            raise NumericalError(f"forward recursion lost all probability mass at frame {t}")
        ahat[t, 0] = a0 / c
        ahat[t, 1] = a1 / c
        ahat[t, 2] = a2 / c
        scale[t] = c
        logz += m + log(c)

    b0 = 1.0
    b1 = 1.0
    b2 = 1.0
    gamma[n - 1, 0] = ahat[n - 1, 0]
    gamma[n - 1, 1] = ahat[n - 1, 1]
    gamma[n - 1, 2] = ahat[n - 1, 2]
    for t in range(t_steps, 0, -1):
        gt = gv[t - 1]
        ht = hv[t - 1]
        c = scale[t]
        e0 = w0[t] * b0
        e1 = w1[t] * b1
        e2 = w0[t] * b2
        p0 = ahat[t - 1, 0]
        p1 = ahat[t - 1, 1]
        p2 = ahat[t - 1, 2]
        xi[t - 1, 0, 0] = p0 * (1.0 - gt) * e0 / c
        xi[t - 1, 0, 1] = p0 * gt * e1 / c
        xi[t - 1, 1, 1] = p1 * (1.0 - ht) * e1 / c
        xi[t - 1, 1, 2] = p1 * ht * e2 / c
        xi[t - 1, 2, 2] = p2 * e2 / c
        nb0 = ((1.0 - gt) * e0 + gt * e1) / c
        nb1 = ((1.0 - ht) * e1 + ht * e2) / c
        nb2 = e2 / c
        b0 = nb0
        b1 = nb1
        b2 = nb2
        gamma[t - 1, 0] = ahat[t - 1, 0] * b0
        gamma[t - 1, 1] = ahat[t - 1, 1] * b1
        gamma[t - 1, 2] = ahat[t - 1, 2] * b2
    return gamma_arr, xi_arr, logz
