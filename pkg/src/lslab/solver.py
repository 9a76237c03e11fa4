"""Best log-Sobolev constant of a domain by constrained minimization.

The minimizer is projected gradient descent on the unit weighted-L2 sphere.
The descent direction is the gradient taken in a variable metric

    P(v) = 8 K + Q diag(max(2 (R - ln v^2 - L(v)) - 4, 0) + shift)

(``K`` the weighted stiffness matrix, ``Q`` the quadrature weights), which
makes the iteration count independent of the grid step. ``P`` is tridiagonal,
or cyclic tridiagonal on periodic chains, so each step costs O(N). Steps
follow the retraction ``v -> |v - t d|`` (with a geometric continuation where
``t d`` would overshoot ``v``), renormalized, with Armijo backtracking, so the
functional never increases.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import kernels
from .errors import InvalidParameter
from .functional import euclidean_gradient, raw_energy
from .geometry import DisconnectedDomain, DomainChain
from .grid import DiscreteField, Grid, build_grid

LOG_FLOOR = 1e-300
RETRACT_EPS = 1e-2
# nodes below this fraction of max v take the full step: their effect on the
# functional is below rounding, so the line search cannot see them
TAIL_CUT = 1e-8


@dataclass(frozen=True)
class SolverOptions:
    dx: float = 0.01
    max_iter: int = 100_000
    tol: float = 1e-6
    restarts: int = 8
    seed: int = 0
    armijo_c1: float = 1e-4
    backtrack: float = 0.5
    min_step: float = 1e-14
    shift: float = 1.0
    stall_window: int = 500
    tail_rtol: float = 1e-6
    tail_floor: float = 1e-150
    polish_max: int = 2000

    def __post_init__(self):
        for name in ("dx", "tol", "armijo_c1", "min_step", "shift"):
            if not getattr(self, name) > 0:
                raise InvalidParameter(f"solver option {name} must be positive")
        if self.max_iter < 1 or self.restarts < 1 or self.polish_max < 1:
            raise InvalidParameter("max_iter and restarts must be at least 1")
        if not 0 < self.backtrack < 1:
            raise InvalidParameter("backtrack factor must lie in (0, 1)")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True, eq=False)
class SpectralResult:
    lam: float
    extremal: DiscreteField
    residual: float
    iterations: int
    converged: bool
    multi_start_spread: float
    restart_lambdas: tuple = field(default=())

    def summary(self) -> dict:
        return {
            "lambda": self.lam,
            "residual": self.residual,
            "iterations": self.iterations,
            "converged": self.converged,
            "multi_start_spread": self.multi_start_spread,
        }


class _Preconditioner:
    """Tridiagonal structure of ``P(v)``; only the diagonal shift varies."""

    def __init__(self, grid: Grid, shift: float):
        n = grid.size
        k = 8.0 * grid.cw / grid.clen
        self.grid = grid
        self.shift = shift
        self.base = np.bincount(grid.cl, k, n) + np.bincount(grid.cr, k, n)
        self.lower = np.zeros(n)
        self.upper = np.zeros(n)
        forward = grid.cr > grid.cl
        self.upper[grid.cl[forward]] = -k[forward]
        self.lower[grid.cr[forward]] = -k[forward]
        # wrap cells close a periodic block: cl = stop-1, cr = start
        wrap = ~forward
        self.lower[grid.cr[wrap]] = -k[wrap]
        self.upper[grid.cl[wrap]] = -k[wrap]
        self.lower[grid.fixed] = 0.0
        self.upper[grid.fixed] = 0.0
        self.curv = grid.qR / grid.q

    def factor(self, v: np.ndarray, lam: float):
        grid = self.grid
        logv2 = np.log(np.maximum(v * v, LOG_FLOOR))
        pot = np.maximum(2.0 * (self.curv - logv2 - lam) - 4.0, 0.0) + self.shift
        diag = self.base + grid.q * pot
        diag[grid.fixed] = 1.0
        self.diag = diag

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        out = np.empty_like(rhs)
        for start, stop, periodic in self.grid.blocks:
            sl = slice(start, stop)
            if periodic:
                out[sl] = kernels.solve_cyclic(self.lower[sl], self.diag[sl], self.upper[sl], rhs[sl])
            else:
                lo = self.lower[sl].copy()
                lo[0] = 0.0
                up = self.upper[sl].copy()
                up[-1] = 0.0
                out[sl] = kernels.thomas(lo, self.diag[sl], up, rhs[sl])
        out[self.grid.fixed] = 0.0
        return out


def _normalize(values: np.ndarray, grid: Grid) -> np.ndarray:
    values = np.abs(values)
    values[grid.fixed] = 0.0
    norm = math.sqrt(float(np.dot(grid.q, values * values)))
    if norm == 0.0 or not np.isfinite(norm):
        raise InvalidParameter("initial field has zero or non-finite norm")
    return values / norm


def _residual(values, G, lam, grid):
    r = -0.5 * G / grid.q + (lam - 1.0) * values
    r[grid.fixed] = 0.0
    return math.sqrt(float(np.dot(grid.q, r * r)))


def _tail_change(v, d, opts):
    """Largest relative update ``|d|/v`` over nodes above the magnitude floor.

    The absolute residual is blind to small tails; this keeps decay profiles
    accurate in relative terms.
    """
    live = v > opts.tail_floor * v.max()
    if not np.any(live):
        return 0.0
    return float(np.max(np.abs(d[live]) / v[live]))


def _retract(v, td):
    """``v - td`` while the relative update ``u = td/v`` stays below
    ``1 - RETRACT_EPS``, then the C1 continuation ``v eps exp(-(u - 1 + eps)/eps)``.

    Tangent to ``-td`` at zero step, but values the step would push through
    zero shrink by orders of magnitude instead of bouncing back.
    """
    eps = RETRACT_EPS
    out = np.abs(v - td)
    pos = v > 0
    u = np.zeros_like(v)
    with np.errstate(over="ignore"):
        u[pos] = td[pos] / v[pos]
    big = u > 1.0 - eps
    with np.errstate(under="ignore", over="ignore"):
        out[big] = eps * v[big] * np.exp(-(u[big] - 1.0 + eps) / eps)
    return out


def _energy_noise(values, grid):
    """Rounding scale of the functional value at ``values``."""
    parts = kernels.energy_parts(np.abs(values), grid.cl, grid.cr, grid.clen, grid.cw, grid.q, np.abs(grid.qR))
    return 64.0 * np.finfo(float).eps * (abs(parts[0]) + abs(parts[1]) + abs(parts[2]) + 1.0)


def descend(grid: Grid, start: np.ndarray, opts: SolverOptions, history: list | None = None):
    """Run one projected-gradient descent from ``start``.

    Returns ``(values, lam, residual, iterations, converged)``. If ``history``
    is given, the functional value after each accepted step is appended.
    """
    q = grid.q
    pre = _Preconditioner(grid, opts.shift)
    v = _normalize(np.array(start, dtype=float), grid)
    lam = raw_energy(v, grid)
    if history is not None:
        history.append(lam)
    step = 1.0
    window_lam = lam
    polish_start = 0
    for it in range(opts.max_iter + 1):
        G = euclidean_gradient(v, grid)
        res = _residual(v, G, lam, grid)
        pre.factor(v, lam)
        qv = q * v
        a = pre.solve(G)
        b = pre.solve(qv)
        d = a - (np.dot(qv, a) / np.dot(qv, b)) * b
        # once the residual is met only small tails can still be moving
        polishing = res <= opts.tol
        if not polishing:
            polish_start = it
        elif _tail_change(v, d, opts) <= opts.tail_rtol or it - polish_start >= opts.polish_max:
            # the residual test is the contract; tail polishing is best effort
            return v, lam, res, it, True
        if it == opts.max_iter:
            break
        # slope from the tangent part of G: the normal part is large and
        # would swamp the tiny tangent slope near convergence
        slope = float(np.dot(G - np.dot(v, G) * qv, d))
        if not (slope > 0 or polishing):
            return v, lam, res, it, False
        noise = _energy_noise(v, grid)
        step = min(1.0, 2.0 * step)
        tail = v < TAIL_CUT * v.max()
        while True:
            td = step * d
            td[tail] = d[tail]
            trial = _retract(v, td)
            trial[grid.fixed] = 0.0
            trial /= math.sqrt(float(np.dot(q, trial * trial)))
            lam_trial = raw_energy(trial, grid)
            if slope > 0 and lam_trial <= lam - opts.armijo_c1 * step * slope:
                break
            # below rounding resolution of L: accept only if the residual drops
            # (or, when polishing tails, if L did not measurably rise)
            if lam_trial <= lam + noise:
                if polishing:
                    break
                G_trial = euclidean_gradient(trial, grid)
                if _residual(trial, G_trial, lam_trial, grid) < res:
                    break
            step *= opts.backtrack
            if step < opts.min_step:
                return v, lam, res, it, False
        v, lam = trial, lam_trial
        if history is not None:
            history.append(lam)
        # soft modes (e.g. near-translations) creep for ever; give up on them
        if (it + 1) % opts.stall_window == 0:
            if window_lam - lam < 1e-12 * (1.0 + abs(lam)):
                G = euclidean_gradient(v, grid)
                return v, lam, _residual(v, G, lam, grid), it + 1, False
            window_lam = lam
    return v, lam, res, opts.max_iter, False


def _segment_starts(domain, grid: Grid):
    """Bump profiles at segment midpoints, cheapest fiber first.

    Cost proxy per segment: mean of ``R + ln w``, the shift a constant field
    pays on that piece.
    """
    comps = domain.components if isinstance(domain, DisconnectedDomain) else (domain,)
    bumps = []
    for ci, D in enumerate(comps):
        for k, seg in enumerate(D.segments):
            lo, hi = D.segment_bounds(k)
            s = np.linspace(0.0, seg.length, 9)
            cost = float(np.mean(seg.curvature(s) + np.log(seg.weight(s))))
            mid = 0.5 * (lo + hi)
            width = max(seg.length / 4.0, 4.0 * grid.dx)
            on = grid.component == ci
            values = np.full(grid.size, 1e-3)
            values[on] += np.exp(-0.5 * ((grid.x[on] - mid) / width) ** 2)
            bumps.append((cost, len(bumps), values))
    bumps.sort(key=lambda item: (item[0], item[1]))
    return [b[2] for b in bumps]


def initial_fields(domain, grid: Grid, opts: SolverOptions) -> list:
    bumps = _segment_starts(domain, grid)
    n_bumps = max(1, min(len(bumps), opts.restarts - 1))
    starts = bumps[:n_bumps]
    rng = np.random.default_rng(opts.seed)
    while len(starts) < opts.restarts:
        starts.append(rng.uniform(0.1, 1.0, grid.size))
    return starts


def _check_compact(domain, dx):
    if isinstance(domain, DomainChain):
        comps = (domain,)
    elif isinstance(domain, DisconnectedDomain):
        comps = domain.components
    else:
        raise InvalidParameter(f"expected a domain, got {type(domain).__name__}")
    for D in comps:
        if not np.isfinite(D.length) or D.length <= dx:
            raise InvalidParameter(f"domain of length {D.length} is degenerate at dx = {dx}")


def minimize_log_sobolev(D, opts: SolverOptions | None = None,
                         initial: Sequence[DiscreteField | np.ndarray] = ()) -> SpectralResult:
    """Approximate ``λ(D)`` and a nonnegative extremal.

    ``initial`` adds warm starts ahead of the default restarts. Among the
    converged runs the lowest functional value wins; if none converged the
    lowest overall is returned with ``converged=False``.
    """
    opts = opts or SolverOptions()
    _check_compact(D, opts.dx)
    grid = build_grid(D, opts.dx)
    starts = [f.values if isinstance(f, DiscreteField) else np.asarray(f) for f in initial]
    starts += initial_fields(D, grid, opts)
    runs = [descend(grid, s, opts) for s in starts]
    lams = [r[1] for r in runs]
    converged = [r for r in runs if r[4]]
    pool = converged or runs
    best = min(pool, key=lambda r: r[1])
    v, lam, res, iters, ok = best
    return SpectralResult(
        lam=float(lam),
        extremal=DiscreteField(grid, v),
        residual=float(res),
        iterations=int(sum(r[3] for r in runs)),
        converged=bool(ok),
        multi_start_spread=float(max(lams) - min(lams)),
        restart_lambdas=tuple(float(x) for x in lams),
    )


def worker_count() -> int:
    try:
        return max(1, int(os.environ.get("LSLAB_THREADS", "1")))
    except ValueError:
        return 1


def map_tasks(func: Callable, items: Sequence):
    """Order-preserving map over a bounded thread pool (``LSLAB_THREADS``)."""
    workers = min(worker_count(), max(1, len(items)))
    if workers == 1:
        return [func(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, items))


def lambda_at_infinity(D_family: Callable[[float], object], r_list: Sequence[float],
                       opts: SolverOptions | None = None) -> list:
    """``[(r, λ(D_family(r)))]`` over the truncation ladder ``r_list``.

    The trend is evidence for the constant at infinity, not a limit.
    """
    r_list = [float(r) for r in r_list]
    if not r_list:
        raise InvalidParameter("empty truncation list")
    if any(b <= a for a, b in zip(r_list, r_list[1:])):
        raise InvalidParameter("truncation radii must be increasing")
    results = map_tasks(lambda r: minimize_log_sobolev(D_family(r), opts), r_list)
    return [(r, res.lam) for r, res in zip(r_list, results)]
