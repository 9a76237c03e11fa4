"""Grids and discrete fields over model domains.

Each segment is split into ``round(length / dx)`` equal cells so segment
breakpoints are always nodes. Integrals use the trapezoid rule with the
fiber weight evaluated from the owning segment on each side of a node, which
keeps kinked (``kink_allowed``) junctions second-order on both sides.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import InvalidParameter, ShapeError
from .geometry import DisconnectedDomain, DomainChain


@dataclass(frozen=True, eq=False)
class Grid:
    """Discretization of a chain or a disjoint union of chains.

    Cells connect node ``cl[c]`` to ``cr[c]``. ``q`` and ``qR`` are the node
    quadrature weights for ``w`` and ``R w``; ``fixed`` marks Dirichlet nodes.
    ``blocks`` lists ``(start, stop, periodic)`` node ranges, one per
    component.
    """

    domain: object
    dx: float
    x: np.ndarray
    component: np.ndarray
    q: np.ndarray
    qR: np.ndarray
    cl: np.ndarray
    cr: np.ndarray
    clen: np.ndarray
    cw: np.ndarray
    fixed: np.ndarray
    blocks: tuple

    @property
    def size(self) -> int:
        return self.x.shape[0]

    @property
    def free(self) -> np.ndarray:
        return ~self.fixed

    def matches(self, domain) -> bool:
        return domain is self.domain or domain == self.domain


def _chain_arrays(D: DomainChain, dx: float):
    xs, q_parts, qr_parts = [], [], []
    cl, clen, cw = [], [], []
    n_total = 0
    offsets = D.offsets
    for seg, off in zip(D.segments, offsets):
        n = max(1, int(round(seg.length / dx)))
        s = np.linspace(0.0, seg.length, n + 1)
        w = seg.weight(s)
        r = seg.curvature(s)
        if np.any(w <= 0) or not np.all(np.isfinite(w)):
            raise InvalidParameter(f"segment {seg.label!r} has a nonpositive weight")
        h = seg.length / n
        q = np.zeros(n + 1)
        q[:-1] += 0.5 * h * w[:-1]
        q[1:] += 0.5 * h * w[1:]
        qr = np.zeros(n + 1)
        qr[:-1] += 0.5 * h * w[:-1] * r[:-1]
        qr[1:] += 0.5 * h * w[1:] * r[1:]
        if n_total == 0:
            base, start = 0, 0
        else:
            # the junction node is shared with the previous segment
            base, start = n_total - 1, 1
            q_parts[-1][-1] += q[0]
            qr_parts[-1][-1] += qr[0]
        xs.append(off + s[start:])
        q_parts.append(q[start:])
        qr_parts.append(qr[start:])
        cl.append(base + np.arange(n))
        clen.append(np.full(n, h))
        cw.append(0.5 * (w[:-1] + w[1:]))
        n_total = base + n + 1
    x = np.concatenate(xs)
    q = np.concatenate(q_parts)
    qR = np.concatenate(qr_parts)
    cl = np.concatenate(cl)
    cr = cl + 1
    clen = np.concatenate(clen)
    cw = np.concatenate(cw)
    fixed = np.zeros(x.shape[0], dtype=bool)
    if D.periodic:
        q[0] += q[-1]
        qR[0] += qR[-1]
        x, q, qR, fixed = x[:-1], q[:-1], qR[:-1], fixed[:-1]
        cr = np.where(cr == x.shape[0], 0, cr)
    else:
        fixed[0] = D.left_bc == "dirichlet"
        fixed[-1] = D.right_bc == "dirichlet"
    return x, q, qR, cl, cr, clen, cw, fixed


@lru_cache(maxsize=64)
def build_grid(domain, dx: float) -> Grid:
    if not (np.isfinite(dx) and dx > 0):
        raise InvalidParameter(f"grid step must be positive, got {dx!r}")
    if isinstance(domain, DomainChain):
        comps = (domain,)
    elif isinstance(domain, DisconnectedDomain):
        comps = domain.components
    else:
        raise InvalidParameter(f"cannot discretize {type(domain).__name__}")
    parts = []
    start = 0
    blocks = []
    for k, D in enumerate(comps):
        if D.length <= dx:
            raise InvalidParameter(f"component {k} of length {D.length} is not longer than dx = {dx}")
        arr = _chain_arrays(D, dx)
        n = arr[0].shape[0]
        parts.append((k, start, arr))
        blocks.append((start, start + n, D.periodic))
        start += n
    x = np.concatenate([a[0] for _, _, a in parts])
    component = np.concatenate([np.full(a[0].shape[0], k) for k, _, a in parts])
    q = np.concatenate([a[1] for _, _, a in parts])
    qR = np.concatenate([a[2] for _, _, a in parts])
    cl = np.concatenate([a[3] + s for _, s, a in parts]).astype(np.int64)
    cr = np.concatenate([a[4] + s for _, s, a in parts]).astype(np.int64)
    clen = np.concatenate([a[5] for _, _, a in parts])
    cw = np.concatenate([a[6] for _, _, a in parts])
    fixed = np.concatenate([a[7] for _, _, a in parts])
    for arr in (x, q, qR, clen, cw):
        arr.setflags(write=False)
    return Grid(domain, float(dx), x, component, q, qR, cl, cr, clen, cw, fixed, tuple(blocks))


@dataclass(frozen=True, eq=False)
class DiscreteField:
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != (self.grid.size,):
            raise ShapeError(f"field has shape {values.shape}, grid has {self.grid.size} nodes")
        object.__setattr__(self, "values", values)

    @property
    def x(self) -> np.ndarray:
        return self.grid.x

    def with_values(self, values) -> "DiscreteField":
        return DiscreteField(self.grid, values)

    def norm_sq(self) -> float:
        return float(np.dot(self.grid.q, self.values**2))

    def normalized(self) -> "DiscreteField":
        return self.with_values(self.values / np.sqrt(self.norm_sq()))

    def __abs__(self):
        return self.with_values(np.abs(self.values))


def sample(grid: Grid, func, enforce_bc: bool = True) -> DiscreteField:
    """Evaluate ``func(x)`` (or ``func(x, component)`` on unions) at the nodes.

    With ``enforce_bc`` the Dirichlet nodes are set to zero.
    """
    if isinstance(grid.domain, DisconnectedDomain):
        values = np.asarray(func(grid.x, grid.component), dtype=float)
    else:
        values = np.asarray(func(grid.x), dtype=float)
    values = np.broadcast_to(values, grid.x.shape).copy()
    if enforce_bc:
        values[grid.fixed] = 0.0
    return DiscreteField(grid, values)


def transfer(field: DiscreteField, grid: Grid, shift: float = 0.0) -> DiscreteField:
    """Linear interpolation of a single-chain field onto another grid.

    Node ``x`` of the target reads the source at ``x - shift``; values outside
    the source chain are zero. Used for warm starts on nested domains.
    """
    src = field.grid
    if len(src.blocks) != 1 or len(grid.blocks) != 1:
        raise ShapeError("transfer supports single-chain grids only")
    xs, vs = src.x, field.values
    if src.blocks[0][2]:
        xs = np.append(xs, src.domain.length)
        vs = np.append(vs, vs[0])
    values = np.interp(grid.x - shift, xs, vs, left=0.0, right=0.0)
    values[grid.fixed] = 0.0
    return DiscreteField(grid, values)
