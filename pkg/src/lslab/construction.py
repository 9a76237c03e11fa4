"""Counterexample pipeline: a ladder of pinched hand-bags joined by necks.

Component ``k`` is a hand-bag with necks of length ``l + |k|`` whose tube is
pinched by exponent ``p_k``. The exponents are found by bisection so that
consecutive best constants step down by 1 (first step) and then by
``1/(k^2 + 1)``. The ladder's infimum is never attained by any component;
:func:`no_extremal_certificate` turns a mass split over components into the
resulting strictly positive sum.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .errors import (
    BracketFailure,
    BudgetViolation,
    InvalidDistribution,
    InvalidParameter,
    PinchPreconditionFailure,
)
from .geometry import (
    DomainChain,
    PinchFamily,
    apply_pinch,
    chain_to_spec,
    concatenate,
    handbag_pinch,
    make_handbag,
)
from .grid import DiscreteField, build_grid, transfer
from .solver import SolverOptions, SpectralResult, minimize_log_sobolev

PINCH_TOL = 1e-4
PINCH_CAP = 64.0
MASS_TOL = 1e-9
BUDGET_K = 50
# sum_{j >= 1} 1/(j^2 + 1) = (pi coth(pi) - 1)/2
LADDER_TAIL = 0.5 * (math.pi / math.tanh(math.pi) - 1.0)


@dataclass(frozen=True, eq=False)
class ComponentSpec:
    k: int
    neck_length: float
    p: float
    lam: float
    chain: DomainChain
    residual: float = math.nan
    converged: bool = True
    extremal: DiscreteField | None = field(default=None, repr=False)

    def row(self) -> dict:
        return {"k": self.k, "neck_length": self.neck_length, "p_k": self.p,
                "lambda_k": self.lam, "residual": self.residual, "converged": self.converged}


@dataclass(frozen=True)
class Certificate:
    lambda_ladder: tuple
    masses: tuple
    infimum: float
    contradiction_value: float
    strictly_above: bool
    budget_terms: tuple
    neck_budget_ok: bool

    def to_dict(self) -> dict:
        return {
            "lambda_ladder": list(self.lambda_ladder),
            "masses": list(self.masses),
            "infimum": self.infimum,
            "contradiction_value": self.contradiction_value,
            "strictly_above": self.strictly_above,
            "budget_terms": list(self.budget_terms),
            "neck_budget_ok": self.neck_budget_ok,
        }


@dataclass(frozen=True, eq=False)
class PinchSearch:
    """Outcome of :func:`search_pinch_exponent` with its evaluation log."""

    p: float
    result: SpectralResult
    evaluations: tuple
    non_monotone: bool


# ---------------------------------------------------------------------------
# neck length


def budget_term(k: int, a: float, A: float, l: float) -> float:
    """``20 A e^{2a} e^{-a(l + |k|)}``."""
    return 20.0 * A * math.exp(2.0 * a - a * (l + abs(k)))


def choose_neck_length(a: float, A: float, l0: float, k_max: int = BUDGET_K) -> float:
    """Smallest of the standard neck lengths that beats the decay budget.

    ``l = max(l0, ln(1000 A e^{2a}/a^2)/a, ln(1000 e^{2a} A)/a, 2)``; the
    result is checked against ``budget_term(k) <= 1/(2(1+k^2))`` for
    ``k <= k_max``.
    """
    for name, val in (("a", a), ("A", A), ("l0", l0)):
        if not (np.isfinite(val) and val > 0):
            raise InvalidParameter(f"{name} must be positive, got {val!r}")
    l = max(
        float(l0),
        (math.log(1000.0 * A / (a * a)) + 2.0 * a) / a,
        (math.log(1000.0 * A) + 2.0 * a) / a,
        2.0,
    )
    for k in range(k_max + 1):
        if budget_term(k, a, A, l) > 0.5 / (1.0 + k * k):
            raise BudgetViolation(f"neck budget fails at k = {k} for l = {l}")
    return l


# ---------------------------------------------------------------------------
# pinch exponent


def search_pinch_exponent(family: PinchFamily, target_lambda: float, opts: SolverOptions | None = None,
                          p_low: float = 0.0, tol: float = PINCH_TOL, cap: float = PINCH_CAP,
                          warm: DiscreteField | None = None, warm_shift: float = 0.0) -> PinchSearch:
    """Bisection in ``p`` for ``λ(apply_pinch(family, p)) = target_lambda``.

    The upper bracket is grown by doubling up to ``cap``. Each evaluation is
    warm-started from the extremal at the nearest evaluated exponent, which
    keeps the search on one branch of minimizers. ``warm`` seeds the first
    evaluation; it may live on another chain and is read at ``x - warm_shift``.
    """
    opts = opts or SolverOptions()
    if not (np.isfinite(p_low) and p_low >= 0):
        raise InvalidParameter(f"lower exponent must be >= 0, got {p_low!r}")
    log = []
    fields = {}

    def lam(p):
        starts = []
        if fields:
            near = min(fields, key=lambda q: abs(q - p))
            starts.append(fields[near])
        chain = apply_pinch(family, p)
        if not fields and warm is not None:
            starts.append(transfer(warm, build_grid(chain, opts.dx), warm_shift))
        res = minimize_log_sobolev(chain, opts, initial=starts)
        fields[p] = res.extremal.values
        log.append((p, res.lam))
        return res

    lo, res_lo = p_low, lam(p_low)
    if res_lo.lam < target_lambda - tol:
        raise BracketFailure(f"λ({p_low}) = {res_lo.lam} is already below the target {target_lambda}")
    if abs(res_lo.lam - target_lambda) <= tol:
        return PinchSearch(lo, res_lo, tuple(log), False)
    hi = max(1.0, 2.0 * p_low)
    while True:
        if hi > cap:
            raise BracketFailure(f"no exponent up to {cap} reaches λ = {target_lambda}")
        res_hi = lam(hi)
        if res_hi.lam <= target_lambda + tol:
            break
        lo, res_lo = hi, res_hi
        hi *= 2.0
    if abs(res_hi.lam - target_lambda) <= tol:
        return PinchSearch(hi, res_hi, tuple(log), _non_monotone(log, tol))
    while True:
        mid = 0.5 * (lo + hi)
        res_mid = lam(mid)
        if abs(res_mid.lam - target_lambda) <= tol:
            return PinchSearch(mid, res_mid, tuple(log), _non_monotone(log, tol))
        if res_mid.lam > target_lambda:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-12 * max(1.0, hi):
            # noise larger than tol: settle on the closer end of the last sign change
            p = lo if abs(lam(lo).lam - target_lambda) < abs(res_mid.lam - target_lambda) else mid
            return PinchSearch(p, lam(p), tuple(log), True)


def _non_monotone(log, tol) -> bool:
    pts = sorted(log)
    return any(b > a + tol for (_, a), (_, b) in zip(pts, pts[1:]))


def find_pinch_exponent(family: PinchFamily, target_lambda: float, opts: SolverOptions | None = None,
                        **kw) -> float:
    return search_pinch_exponent(family, target_lambda, opts, **kw).p


# ---------------------------------------------------------------------------
# ladder


def ladder_step(k: int) -> float:
    """Drop from component ``k`` to ``k + 1``."""
    return 1.0 if k == 0 else 1.0 / (k * k + 1.0)


def ladder_infimum(lambda0: float) -> float:
    """Limit of the ladder started at ``lambda0``."""
    return lambda0 - 1.0 - LADDER_TAIL


def build_component_sequence(K: int, h: float, l: float, opts: SolverOptions | None = None,
                             tol: float = PINCH_TOL) -> list:
    """Components ``k = 0..K`` with necks ``l + k`` and bisected exponents."""
    if int(K) != K or K < 1:
        raise InvalidParameter(f"K must be a positive integer, got {K!r}")
    opts = opts or SolverOptions()
    base0 = make_handbag(h, l)
    res0 = minimize_log_sobolev(base0, opts)
    if not res0.lam < 0:
        raise PinchPreconditionFailure(
            f"λ of the unpinched hand-bag is {res0.lam:.6g} >= 0; use a smaller h")
    comps = [ComponentSpec(0, float(l), 0.0, res0.lam, base0, res0.residual, res0.converged, res0.extremal)]
    for k in range(int(K)):
        prev = comps[-1]
        family = handbag_pinch(make_handbag(h, l + k + 1))
        search = search_pinch_exponent(family, prev.lam - ladder_step(k), opts, p_low=prev.p, tol=tol,
                                       warm=prev.extremal, warm_shift=1.0)
        res = search.result
        comps.append(ComponentSpec(k + 1, float(l + k + 1), search.p, res.lam,
                                   apply_pinch(family, search.p), res.residual, res.converged, res.extremal))
    ps = [c.p for c in comps]
    if any(b < a for a, b in zip(ps, ps[1:])):
        raise BracketFailure(f"pinch exponents decrease along the ladder: {ps}")
    return comps


def assemble_counterexample(components: Sequence[ComponentSpec], K: int) -> DomainChain:
    """Chain ``Ω_{-K} ... Ω_K``; negative indices are mirror images."""
    by_k = {c.k: c for c in components}
    missing = [k for k in range(K + 1) if k not in by_k]
    if missing:
        raise InvalidParameter(f"missing components {missing}")
    parts = [by_k[abs(k)].chain.reflected() if k < 0 else by_k[k].chain for k in range(-K, K + 1)]
    return concatenate(parts, "dirichlet", "dirichlet")


def component_masses(result: SpectralResult, components: Sequence[ComponentSpec], K: int) -> list:
    """Share of ``int v^2 w`` on each component of an assembled chain, ``k = -K..K``."""
    by_k = {c.k: c for c in components}
    grid = result.extremal.grid
    contrib = grid.q * result.extremal.values ** 2
    edges = np.cumsum([0.0] + [by_k[abs(k)].chain.length for k in range(-K, K + 1)])
    # junction nodes are split evenly between neighbours
    out = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        tol = 1e-9 * max(1.0, edges[-1])
        inner = (grid.x > lo + tol) & (grid.x < hi - tol)
        ends = (np.abs(grid.x - lo) <= tol) | (np.abs(grid.x - hi) <= tol)
        out.append(float(np.sum(contrib[inner]) + 0.5 * np.sum(contrib[ends])))
    # boundary nodes carry no mass (Dirichlet), so the split sums to the total
    total = sum(out)
    return [m / total for m in out]


# ---------------------------------------------------------------------------
# certificate


def no_extremal_certificate(lambda_ladder: Sequence[float], masses: Sequence[float], a: float, A: float,
                            l: float, infimum: float | None = None,
                            ks: Sequence[int] | None = None) -> Certificate:
    """``sum m_k (λ_k - λ)`` for a mass split, plus the neck budget check.

    ``infimum`` defaults to the smallest ladder entry. ``ks`` are the
    component indices (default ``0..n-1``) used for the budget terms
    ``1/(1+k^2) - 20 A e^{2a} e^{-a(l+|k|)}``.
    """
    lams = [float(x) for x in lambda_ladder]
    m = np.asarray(masses, dtype=float)
    if not lams:
        raise InvalidParameter("empty ladder")
    if m.shape != (len(lams),):
        raise InvalidDistribution(f"{m.size} masses for a ladder of {len(lams)}")
    if not np.all(np.isfinite(m)) or np.any(m < 0):
        raise InvalidDistribution("masses must be finite and nonnegative")
    if abs(math.fsum(m) - 1.0) > MASS_TOL:
        raise InvalidDistribution(f"masses sum to {math.fsum(m)!r}, not 1")
    lam = min(lams) if infimum is None else float(infimum)
    value = math.fsum(mk * (lk - lam) for mk, lk in zip(m, lams))
    ks = list(range(len(lams))) if ks is None else [int(k) for k in ks]
    terms = tuple(1.0 / (1.0 + k * k) - budget_term(k, a, A, l) for k in ks)
    return Certificate(
        lambda_ladder=tuple(lams),
        masses=tuple(float(x) for x in m),
        infimum=lam,
        contradiction_value=value,
        strictly_above=all(lk > lam for lk in lams),
        budget_terms=terms,
        neck_budget_ok=all(t > 0 for t in terms),
    )


def disconnected_infimum(component_lambdas: Sequence[float]) -> float:
    """Best constant of a disjoint union: the smallest component value."""
    if len(component_lambdas) == 0:
        raise InvalidParameter("empty list of component constants")
    return float(min(component_lambdas))


# ---------------------------------------------------------------------------
# constants and outputs


def fitted_constants(reports) -> tuple:
    """Conservative ``(a, A)`` from decay reports: slowest rate, largest amplitude."""
    pairs = []
    for r in reports:
        m = r.measured
        if r.lemma in ("3.2", "3.3"):
            pairs.append((m["mass_rate"], m["mass_amplitude"]))
        elif r.lemma == "3.5":
            pairs.append((m["rate"], m["amplitude"]))
    pairs = [(a, A) for a, A in pairs if a > 0 and A > 0]
    if not pairs:
        raise InvalidParameter("no decay report with a positive fitted rate")
    return min(a for a, _ in pairs), max(A for _, A in pairs)


def write_ladder_csv(path, components: Sequence[ComponentSpec]):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["k", "neck_length", "p_k", "lambda_k"])
        for c in components:
            w.writerow([c.k, repr(c.neck_length), repr(c.p), repr(c.lam)])


def read_ladder_csv(path) -> list:
    """Rows of a ladder table as ``(k, lambda_k)`` pairs."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [(int(r["k"]), float(r["lambda_k"])) for r in rows]


def pipeline_manifest(inputs: dict, components: Sequence[ComponentSpec], certificate: Certificate | None,
                      extra: dict | None = None) -> dict:
    out = {
        "inputs": inputs,
        "components": [c.row() for c in components],
        "ladder_differences": [a.lam - b.lam for a, b in zip(components, components[1:])],
        "ladder_targets": [ladder_step(c.k) for c in components[:-1]],
        "infimum_limit": ladder_infimum(components[0].lam) if components else None,
    }
    if certificate is not None:
        out["certificate"] = certificate.to_dict()
    if extra:
        out.update(extra)
    return out


def run_pipeline(h: float, K: int, l: float, opts: SolverOptions | None = None, a: float = 1.0,
                 A: float = 1.0, solve_assembled: bool = True) -> dict:
    """Ladder, assembly and certificate in one call; returns the manifest dict
    plus the live objects under ``"_components"`` and ``"_assembled"``."""
    opts = opts or SolverOptions()
    comps = build_component_sequence(K, h, l, opts)
    assembled = assemble_counterexample(comps, K)
    ladder = [comps[abs(k)].lam for k in range(-K, K + 1)]
    ks = list(range(-K, K + 1))
    inf = ladder_infimum(comps[0].lam)
    extra = {"assembled_length": assembled.length}
    if solve_assembled:
        res = minimize_log_sobolev(assembled, opts)
        masses = component_masses(res, comps, K)
        extra["assembled"] = res.summary()
    else:
        masses = [1.0 / len(ladder)] * len(ladder)
    cert = no_extremal_certificate(ladder, masses, a, A, l, infimum=inf, ks=ks)
    inputs = {"h": h, "K": K, "l": l, "a": a, "A": A, "solver": opts.to_dict()}
    manifest = pipeline_manifest(inputs, comps, cert, extra)
    manifest["assembled_spec"] = chain_to_spec(assembled)
    manifest["_components"] = comps
    manifest["_assembled"] = assembled
    return manifest


def dump_manifest(manifest: dict, path):
    public = {k: v for k, v in manifest.items() if not k.startswith("_")}
    with open(path, "w") as fh:
        json.dump(public, fh, indent=2, sort_keys=True)
