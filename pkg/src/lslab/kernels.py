"""Backend dispatch for the hot numeric kernels.

The numba path is used when numba imports and ``LSLAB_BACKEND`` is not set to
``numpy``. Both backends stay importable for benchmarking and equivalence
tests.
"""

import os

import numpy as np

from . import _kernels_numpy

try:
    from . import _kernels_numba
except ImportError:  # pragma: no cover - numba is an optional accelerator
    _kernels_numba = None

BACKENDS = {"numpy": _kernels_numpy}
if _kernels_numba is not None:
    BACKENDS["numba"] = _kernels_numba


def _select():
    name = os.environ.get("LSLAB_BACKEND", "numba").strip().lower()
    if name not in ("numpy", "numba"):
        raise ValueError(f"LSLAB_BACKEND must be 'numpy' or 'numba', got {name!r}")
    if name == "numba" and _kernels_numba is None:
        name = "numpy"
    return name


BACKEND = _select()
_impl = BACKENDS[BACKEND]

energy_parts = _impl.energy_parts
euclid_gradient = _impl.euclid_gradient
thomas = _impl.thomas


def solve_cyclic(lower, diag, upper, rhs, thomas=thomas):
    """Solve a cyclic tridiagonal system.

    ``lower[0]`` couples row 0 to row n-1 and ``upper[-1]`` couples row n-1
    to row 0. Sherman-Morrison on top of two banded solves.
    """
    n = diag.shape[0]
    if n <= 2:
        a = np.diag(diag)
        for i in range(n):
            a[i, (i + 1) % n] += upper[i]
            a[i, (i - 1) % n] += lower[i]
        return np.linalg.solve(a, rhs)
    alpha = upper[-1]
    beta = lower[0]
    gamma = -diag[0]
    d = diag.copy()
    d[0] -= gamma
    d[-1] -= alpha * beta / gamma
    lo = lower.copy()
    up = upper.copy()
    lo[0] = 0.0
    up[-1] = 0.0
    x = thomas(lo, d, up, rhs)
    u = np.zeros(n)
    u[0] = gamma
    u[-1] = alpha
    z = thomas(lo, d, up, u)
    fact = (x[0] + beta * x[-1] / gamma) / (1.0 + z[0] + beta * z[-1] / gamma)
    return x - fact * z
