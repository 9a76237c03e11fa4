"""Loop kernels compiled with numba.

Same contracts as :mod:`lslab._kernels_numpy`; ``nogil`` so sweep workers on
threads overlap.
"""

import math

import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def energy_parts(v, cl, cr, clen, cw, q, qR):
    dirichlet = 0.0
    for c in range(cl.shape[0]):
        dv = v[cr[c]] - v[cl[c]]
        dirichlet += cw[c] * dv * dv / clen[c]
    curvature = 0.0
    entropy = 0.0
    for i in range(v.shape[0]):
        t = v[i] * v[i]
        curvature += qR[i] * t
        if t > 0.0:
            entropy -= q[i] * t * math.log(t)
    return 4.0 * dirichlet, curvature, entropy


@njit(cache=True, nogil=True)
def euclid_gradient(v, cl, cr, clen, cw, q, qR):
    n = v.shape[0]
    g = np.zeros(n)
    for c in range(cl.shape[0]):
        flux = 8.0 * cw[c] * (v[cr[c]] - v[cl[c]]) / clen[c]
        g[cr[c]] += flux
        g[cl[c]] -= flux
    for i in range(n):
        t = v[i] * v[i]
        vlog = v[i] * math.log(t) if t > 0.0 else 0.0
        g[i] += 2.0 * qR[i] * v[i] - q[i] * (2.0 * vlog + 2.0 * v[i])
    return g


@njit(cache=True, nogil=True)
def thomas(lower, diag, upper, rhs):
    n = diag.shape[0]
    c = np.empty(n)
    x = np.empty(n)
    beta = diag[0]
    x[0] = rhs[0] / beta
    for i in range(1, n):
        c[i - 1] = upper[i - 1] / beta
        beta = diag[i] - lower[i] * c[i - 1]
        x[i] = (rhs[i] - lower[i] * x[i - 1]) / beta
    for i in range(n - 2, -1, -1):
        x[i] -= c[i] * x[i + 1]
    return x
