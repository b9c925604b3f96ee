"""Pure-Python forward-backward kernel for one 3-state progression chain.

Fallback used when the compiled extension is unavailable.  Semantics are
identical to ``_fb_cy.chain_forward_backward``: per-step scaling keeps the
recursion finite for chains of 10^4 frames and beyond, and the log
normalizer is accumulated from the per-step scale factors.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import NumericalError


def chain_forward_backward(logw0, logw1, g, h):
    """Smoothed marginals of a single scaled 3-state chain.

    Parameters
    ----------
    logw0, logw1 : (T+1,) log data weights for states {0, 2} and state 1.
    g, h : (T,) onset/offset probabilities for steps t=1..T.

    Returns
    -------
    gamma : (T+1, 3) posterior state marginals; gamma[0] = (1, 0, 0).
    xi : (T, 3, 3) pairwise marginals between frames t-1 and t.
    logz : float, log normalizer of the chain.
    """
    logw0 = np.ascontiguousarray(logw0, dtype=np.float64)
    logw1 = np.ascontiguousarray(logw1, dtype=np.float64)
    g = np.ascontiguousarray(g, dtype=np.float64)
    h = np.ascontiguousarray(h, dtype=np.float64)
    n = logw0.shape[0]
    t_steps = n - 1
    if logw1.shape[0] != n or g.shape[0] != t_steps or h.shape[0] != t_steps:
        raise ValueError("inconsistent chain lengths")

    w0 = np.empty(n)
    w1 = np.empty(n)
    scale = np.empty(n)
    ahat = np.empty((n, 3))
    logz = 0.0

    # forward pass with per-step normalization
    for t in range(n):
        m = logw0[t] if logw0[t] >= logw1[t] else logw1[t]
        if not math.isfinite(m):
            raise NumericalError(f"non-finite data weight at frame {t}")
        w0[t] = math.exp(logw0[t] - m)
        w1[t] = math.exp(logw1[t] - m)
        if t == 0:
            a0, a1, a2 = w0[0], 0.0, 0.0
        else:
            p0, p1, p2 = ahat[t - 1]
            gt, ht = g[t - 1], h[t - 1]
            a0 = w0[t] * p0 * (1.0 - gt)
            a1 = w1[t] * (p0 * gt + p1 * (1.0 - ht))
            a2 = w0[t] * (p1 * ht + p2)
        c = a0 + a1 + a2
        if c <= 0.0 or not math.isfinite(c):
            raise NumericalError(f"forward recursion lost all probability mass at frame {t}")
        ahat[t, 0] = a0 / c
        ahat[t, 1] = a1 / c
        ahat[t, 2] = a2 / c
        scale[t] = c
        logz += m + math.log(c)

    gamma = np.empty((n, 3))
    xi = np.zeros((t_steps, 3, 3))
    b0, b1, b2 = 1.0, 1.0, 1.0
    gamma[n - 1, 0] = ahat[n - 1, 0]
    gamma[n - 1, 1] = ahat[n - 1, 1]
    gamma[n - 1, 2] = ahat[n - 1, 2]
    for t in range(t_steps, 0, -1):
        gt, ht = g[t - 1], h[t - 1]
        c = scale[t]
        e0 = w0[t] * b0
        e1 = w1[t] * b1
        e2 = w0[t] * b2
        p0, p1, p2 = ahat[t - 1]
        xi[t - 1, 0, 0] = p0 * (1.0 - gt) * e0 / c
        xi[t - 1, 0, 1] = p0 * gt * e1 / c
        xi[t - 1, 1, 1] = p1 * (1.0 - ht) * e1 / c
        xi[t - 1, 1, 2] = p1 * ht * e2 / c
        xi[t - 1, 2, 2] = p2 * e2 / c
        nb0 = ((1.0 - gt) * e0 + gt * e1) / c
        nb1 = ((1.0 - ht) * e1 + ht * e2) / c
        nb2 = e2 / c
        b0, b1, b2 = nb0, nb1, nb2
        gamma[t - 1, 0] = ahat[t - 1, 0] * b0
        gamma[t - 1, 1] = ahat[t - 1, 1] * b1
        gamma[t - 1, 2] = ahat[t - 1, 2] * b2
    return gamma, xi, logz
