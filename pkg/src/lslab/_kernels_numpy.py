"""Vectorized numpy implementations of the hot kernels.

Reference path and fallback when numba is unavailable or disabled. Signatures
match :mod:`lslab._kernels_numba` exactly.
"""

import numpy as np
from scipy.linalg import solve_banded


def xlogx(t):
    """t*ln(t) with the continuous extension 0 at t = 0."""
    out = np.zeros_like(t)
    pos = t > 0.0
    out[pos] = t[pos] * np.log(t[pos])
    return out


def energy_parts(v, cl, cr, clen, cw, q, qR):
    dv = v[cr] - v[cl]
    dirichlet = 4.0 * np.sum(cw * dv * dv / clen)
    v2 = v * v
    curvature = float(np.dot(qR, v2))
    entropy = -float(np.dot(q, xlogx(v2)))
    return float(dirichlet), curvature, entropy


def euclid_gradient(v, cl, cr, clen, cw, q, qR):
    n = v.shape[0]
    flux = 8.0 * cw * (v[cr] - v[cl]) / clen
    g = np.bincount(cr, flux, n) - np.bincount(cl, flux, n)
    v2 = v * v
    vlog = np.zeros_like(v)
    pos = v2 > 0.0
    vlog[pos] = v[pos] * np.log(v2[pos])
    g += 2.0 * qR * v - q * (2.0 * vlog + 2.0 * v)
    return g


def thomas(lower, diag, upper, rhs):
    n = diag.shape[0]
    if n == 1:
        return rhs / diag
    ab = np.empty((3, n))
    ab[0, 0] = 0.0
    ab[0, 1:] = upper[:-1]
    ab[1] = diag
    ab[2, :-1] = lower[1:]
    ab[2, -1] = 0.0
    return solve_banded((1, 1), ab, rhs, check_finite=False)
