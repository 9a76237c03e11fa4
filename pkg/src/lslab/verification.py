"""Numerical checks of the quantitative estimates on computed extremals.

Every check returns :class:`LemmaReport` objects whose pass flag is a pure
function of the stored measurements (see :func:`recheck`). Decay constants are
fitted quantities; nothing here asserts they equal any particular value.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy import stats

from .errors import (
    InsufficientData,
    InvalidCutoff,
    InvalidParameter,
    NormalizationError,
    OutOfRange,
    StaleResult,
    UnderflowRegion,
    UnknownSegment,
)
from .functional import evaluate_log_sobolev, l2_norm_sq
from .geometry import (
    DomainChain,
    PinchFamily,
    apply_pinch,
    chain,
    make_flat_tube,
    neck_end_host,
    neck_host,
    resize_segment,
)
from .grid import DiscreteField, build_grid, sample
from .solver import SolverOptions, SpectralResult, map_tasks, minimize_log_sobolev

MAX_BOUND_TOL = 1e-6
MEAN_VALUE_STABILITY = 0.2
GAUSSIAN_SLOPE_MAX = -1e-3
NECK_SLOPE_MAX = -1e-2
NECK_R2_MIN = 0.95
EXTENSION_R2_MIN = 0.9
CUTOFF_SLACK_TOL = 1e-4
CONTINUITY_NOISE = 1e-5
UNDERFLOW = 1e-300
DEFAULT_H0 = 0.25
DOMINANCE_RTOL = 1e-9


@dataclass(frozen=True)
class LemmaReport:
    lemma: str
    inputs: dict
    measured: dict
    passed: bool
    margin: float

    def to_dict(self) -> dict:
        return {"lemma": self.lemma, "inputs": self.inputs, "measured": self.measured,
                "pass": self.passed, "margin": self.margin}

    def to_json(self) -> str:
        return json.dumps(_jsonable(self.to_dict()), sort_keys=True)

    @classmethod
    def from_json(cls, line: str) -> "LemmaReport":
        d = json.loads(line)
        return cls(d["lemma"], d["inputs"], d["measured"], bool(d["pass"]), float(d["margin"]))


@dataclass(frozen=True)
class DecayFit:
    """Envelope ``A exp(-a t)`` with ``t = d^2`` or ``t = l``.

    ``rate`` is the least-squares slope of ``ln v`` (negated); ``amplitude``
    is lifted from the least-squares intercept by the largest positive
    residual, so the envelope dominates every fitted sample.
    """

    rate: float
    amplitude: float
    fit_range: tuple
    r_squared: float
    report: LemmaReport | None = field(default=None, compare=False)

    def envelope(self, t):
        return self.amplitude * np.exp(-self.rate * np.asarray(t, dtype=float))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if math.isfinite(f) else repr(f)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


# ---------------------------------------------------------------------------
# pass rules: measured dict -> (passed, margin)


def _rule_max_bound(m):
    margin = m["sup_v"] - m["bound"]
    return margin >= -MAX_BOUND_TOL, margin


def _rule_mean_value(m):
    c, c2 = m["C_obs"], m["C_obs_refined"]
    if not (math.isfinite(c) and math.isfinite(c2) and c > 0):
        return False, -math.inf
    margin = MEAN_VALUE_STABILITY - abs(c2 / c - 1.0)
    return margin >= 0, margin


def _rule_mean_value_spread(m):
    values = m["C_obs"]
    ok = all(math.isfinite(c) and c > 0 for c in values)
    return ok, (min(values) if ok else -math.inf)


def _rule_gaussian(m):
    margin = min(GAUSSIAN_SLOPE_MAX - m["slope"], 1.0 + DOMINANCE_RTOL - m["dominance"])
    return margin >= 0, margin


def _rule_neck_decay(m):
    margin = min(
        NECK_SLOPE_MAX - m["slope"],
        m["r_squared"] - NECK_R2_MIN,
        m["mass_rate"],
        1.0 + DOMINANCE_RTOL - m["value"] / m["value_envelope"],
        1.0 + DOMINANCE_RTOL - m["mass_ratio"] / m["mass_envelope"],
    )
    return margin >= 0, margin


def _rule_cutoff(m):
    return m["slack"] >= -CUTOFF_SLACK_TOL, m["slack"]


def _rule_extension(m):
    margin = min(
        m["difference"] + m["noise"],
        m["rate"],
        m["r_squared"] - EXTENSION_R2_MIN,
        1.0 + DOMINANCE_RTOL - m["difference"] / m["envelope"],
    )
    return margin >= 0, margin


def _rule_continuity(m):
    d = m["differences"]
    steps = [d[i] - d[i + 1] for i in range(len(d) - 1)]
    margin = min(steps, default=0.0) + CONTINUITY_NOISE
    return margin >= 0, margin


def _rule_tube_collapse(m):
    margin = min(
        1e-6 - abs(m["norm_sq"] - 1.0),
        1e-3 - abs(m["dirichlet_part"] - m["dirichlet_exact"]),
        1e-3 - abs(m["entropy_part"] - m["entropy_exact"]),
        m["test_value"] - m["lambda"] + 1e-6,
    )
    return margin >= 0, margin


def _rule_tube_drop(m):
    margin = min(m["drops"]) - 1.0 if m["drops"] else -math.inf
    return margin >= 0, margin


_RULES = {
    "2.1": _rule_mean_value,
    "2.1-h": _rule_mean_value_spread,
    "2.2": _rule_max_bound,
    "2.3": _rule_gaussian,
    "2.5": _rule_continuity,
    "3.2": _rule_neck_decay,
    "3.3": _rule_neck_decay,
    "3.4": _rule_cutoff,
    "3.5": _rule_extension,
    "3.6": _rule_tube_collapse,
    "3.6-h": _rule_tube_drop,
}

LEMMA_IDS = tuple(sorted(_RULES))


def _report(lemma: str, inputs: dict, measured: dict) -> LemmaReport:
    passed, margin = _RULES[lemma](measured)
    return LemmaReport(lemma, _jsonable(inputs), _jsonable(measured), bool(passed), float(margin))


def recheck(report: LemmaReport) -> tuple:
    """Recompute ``(passed, margin)`` from the stored measurements."""
    passed, margin = _RULES[report.lemma](report.measured)
    return bool(passed), float(margin)


def write_reports(reports: Sequence[LemmaReport], jsonl_path, csv_path=None):
    """One JSON object per line, plus an optional summary CSV."""
    with open(jsonl_path, "w") as fh:
        for r in reports:
            fh.write(r.to_json() + "\n")
    if csv_path is not None:
        with open(csv_path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["lemma", "params", "pass", "margin"])
            for r in reports:
                w.writerow([r.lemma, json.dumps(r.inputs, sort_keys=True), r.passed, repr(r.margin)])


def read_reports(path) -> list:
    with open(path) as fh:
        return [LemmaReport.from_json(line) for line in fh if line.strip()]


# ---------------------------------------------------------------------------
# helpers


def _require_converged(res: SpectralResult):
    if not res.converged:
        raise StaleResult("solver result did not converge; rerun before checking")


def _default_opts(opts, dx=None, **kw):
    opts = opts or SolverOptions(**kw)
    if dx is not None:
        opts = replace(opts, dx=dx)
    return opts


def line_fit(x, y):
    """Least-squares line ``y = slope x + intercept`` with ``r^2``.

    ``r^2`` is 0 when ``y`` has no spread (nothing to explain).
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 2 or np.ptp(x) == 0:
        raise InsufficientData("a line fit needs at least two distinct abscissae")
    if np.ptp(y) == 0:
        return 0.0, float(y[0]), 0.0
    fit = stats.linregress(x, y)
    return float(fit.slope), float(fit.intercept), float(fit.rvalue ** 2)


def envelope_fit(t, values, fit_range=None) -> DecayFit:
    """Fit ``ln values`` against ``t`` and lift the intercept to dominate."""
    t = np.asarray(t, dtype=float)
    logv = np.log(np.asarray(values, dtype=float))
    slope, intercept, r2 = line_fit(t, logv)
    lift = float(np.max(logv - (slope * t + intercept)))
    rng = fit_range if fit_range is not None else (float(t.min()), float(t.max()))
    return DecayFit(rate=-slope, amplitude=float(math.exp(intercept + max(lift, 0.0))),
                    fit_range=tuple(float(r) for r in rng), r_squared=r2)


def _distance(grid, origin):
    d = np.abs(grid.x - origin)
    if len(grid.blocks) == 1 and grid.blocks[0][2]:
        d = np.minimum(d, grid.domain.length - d)
    return d


def _periodic(grid) -> bool:
    return len(grid.blocks) == 1 and grid.blocks[0][2]


def _node_weights(field: DiscreteField) -> np.ndarray:
    return field.grid.domain.weight_at(field.grid.x)


def _unwrapped(grid, f):
    """Nodes and nodal values, tiled once on each side for periodic chains."""
    x = grid.x
    if _periodic(grid):
        L = grid.domain.length
        return np.concatenate([x - L, x, x + L]), np.tile(f, 3)
    return x, f


def interval_integral(grid, f, lo: float, hi: float) -> float:
    """Integral of the piecewise-linear interpolant of nodal ``f`` over ``[lo, hi]``."""
    x, f = _unwrapped(grid, f)
    inside = (x > lo) & (x < hi)
    xs = np.concatenate([[lo], x[inside], [hi]])
    fs = np.concatenate([[np.interp(lo, x, f)], f[inside], [np.interp(hi, x, f)]])
    return float(np.trapezoid(fs, xs))


def interval_max(grid, f, lo: float, hi: float) -> float:
    x, f = _unwrapped(grid, f)
    inside = (x >= lo) & (x <= hi)
    ends = [np.interp(lo, x, f), np.interp(hi, x, f)]
    return float(max(np.max(f[inside], initial=-np.inf), *ends))


def mass(field: DiscreteField, lo: float, hi: float) -> float:
    """``int_lo^hi v^2 w dx`` for a single-chain field."""
    return interval_integral(field.grid, field.values ** 2 * _node_weights(field), lo, hi)


# ---------------------------------------------------------------------------
# maximum lower bound


def check_max_lower_bound(res: SpectralResult, D: DomainChain) -> LemmaReport:
    """``sup v >= exp((inf R - λ)/2)`` on a converged Dirichlet extremal."""
    _require_converged(res)
    v = res.extremal
    if not v.grid.matches(D):
        raise InvalidParameter("result was computed on a different domain")
    if not (isinstance(D, DomainChain) and D.left_bc == "dirichlet" and D.right_bc == "dirichlet"):
        raise InvalidParameter("the maximum bound is checked on Dirichlet chains")
    norm = l2_norm_sq(v, D)
    if abs(norm - 1.0) > 1e-8:
        raise NormalizationError(f"extremal has squared norm {norm!r}")
    inf_R = float(np.min(D.curvature_at(v.grid.x)))
    measured = {
        "sup_v": float(np.max(v.values)),
        "inf_R": inf_R,
        "lambda": res.lam,
        "bound": math.exp(0.5 * (inf_R - res.lam)),
    }
    return _report("2.2", {"length": D.length, "dx": v.grid.dx}, measured)


# ---------------------------------------------------------------------------
# mean value


def mean_value_ratio(field: DiscreteField, m: float) -> float:
    """``sup_{B(m,1)} v^2 / int_{B(m,2)} v^2 w``."""
    grid = field.grid
    D = grid.domain
    if not isinstance(D, DomainChain):
        raise InvalidParameter("mean-value balls are taken on a single chain")
    if _periodic(grid):
        if D.length < 4.0:
            raise OutOfRange("periodic chain shorter than the ball B(m, 2)")
    elif m - 2.0 < -1e-12 or m + 2.0 > D.length + 1e-12:
        raise OutOfRange(f"ball B({m}, 2) leaves the chain [0, {D.length}]")
    sup = interval_max(grid, field.values ** 2, m - 1.0, m + 1.0)
    return sup / mass(field, m - 2.0, m + 2.0)


def check_mean_value(res: SpectralResult, D: DomainChain, m: float,
                     refined: SpectralResult | None = None,
                     opts: SolverOptions | None = None) -> LemmaReport:
    """Observed mean-value constant and its stability under one refinement.

    Without ``refined`` the domain is re-solved at half the grid step.
    """
    if not res.extremal.grid.matches(D):
        raise InvalidParameter("result was computed on a different domain")
    c = mean_value_ratio(res.extremal, m)
    if refined is None:
        refined = minimize_log_sobolev(D, _default_opts(opts, dx=0.5 * res.extremal.grid.dx))
    c2 = mean_value_ratio(refined.extremal, m)
    measured = {"C_obs": c, "C_obs_refined": c2, "lambda": res.lam}
    return _report("2.1", {"m": m, "dx": res.extremal.grid.dx, "dx_refined": refined.extremal.grid.dx}, measured)


def mean_value_spread(h_list: Sequence[float] = (0.05, 0.1, 0.2), l: float = 4.0,
                      opts: SolverOptions | None = None) -> LemmaReport:
    """Mean-value constant at the neck middle across neck scales ``h``.

    The spread is reported, not thresholded; the check fails only if some
    constant is not finite.
    """
    opts = _default_opts(opts)

    def one(h):
        D = neck_host(h, l)
        lo, hi = D.segment_bounds(D.find("N")[0])
        return mean_value_ratio(minimize_log_sobolev(D, opts).extremal, 0.5 * (lo + hi))

    values = map_tasks(one, list(h_list))
    good = [c for c in values if math.isfinite(c) and c > 0]
    spread = max(good) / min(good) if good else math.inf
    return _report("2.1-h", {"h": list(h_list), "l": l, "dx": opts.dx},
                   {"C_obs": values, "spread": spread})


# ---------------------------------------------------------------------------
# Gaussian decay


def fit_gaussian_decay(res: SpectralResult, D: DomainChain, origin: float, r0: float = 2.0,
                       width: float = 4.0) -> DecayFit:
    """Fit ``ln v`` against ``d^2`` for ``r0 <= d <= r0 + width``.

    The amplitude is raised until the envelope covers every node with
    ``d >= r0``. The attached report passes iff the slope is at most
    ``-1e-3`` and that domination holds.
    """
    _require_converged(res)
    v = res.extremal
    if not v.grid.matches(D):
        raise InvalidParameter("result was computed on a different domain")
    d = _distance(v.grid, origin)
    if d.max() < r0 + width - 1e-12:
        raise OutOfRange(f"domain extends only {d.max():.6g} beyond the origin; need {r0 + width}")
    band = (d >= r0) & (d <= r0 + width)
    far = d >= r0
    usable = band & (v.values > UNDERFLOW)
    if not np.any(v.values[band] > UNDERFLOW):
        raise UnderflowRegion("all far-field values underflow; shrink the fit range")
    if np.count_nonzero(usable) < 3:
        raise InsufficientData("fewer than three usable far-field nodes")
    fit = envelope_fit(d[usable] ** 2, v.values[usable], (r0, r0 + width))
    # the rate comes from the band; the amplitude must cover the whole far field
    live = far & (v.values > UNDERFLOW)
    lift = float(np.max(v.values[live] / fit.envelope(d[live] ** 2)))
    if lift > 1.0:
        fit = replace(fit, amplitude=fit.amplitude * lift)
    env = fit.envelope(d[far] ** 2)
    dominance = float(np.max(v.values[far] / env))
    slope = -fit.rate
    measured = {"slope": slope, "rate": fit.rate, "amplitude": fit.amplitude,
                "r_squared": fit.r_squared, "dominance": dominance}
    report = _report("2.3", {"origin": origin, "r0": r0, "width": width, "dx": v.grid.dx}, measured)
    return replace(fit, report=report)


# ---------------------------------------------------------------------------
# neck decay


def _check_necks(h, l_list, h0):
    if not (h > 0 and h <= h0):
        raise InvalidParameter(f"neck scale h = {h} must lie in (0, {h0}]")
    l_list = [float(l) for l in l_list]
    if len(l_list) < 3:
        raise InsufficientData("a decay fit needs at least three neck lengths")
    if any(l < 2 for l in l_list):
        raise InvalidParameter("neck lengths must be at least 2")
    return l_list


def _decay_reports(lemma, h, l_list, rows, opts):
    values = [r["value"] for r in rows]
    ratios = [r["mass_ratio"] for r in rows]
    if min(values) <= UNDERFLOW or min(ratios) <= 0:
        raise UnderflowRegion("neck values underflow; use shorter necks")
    vfit = envelope_fit(l_list, values)
    mfit = envelope_fit(l_list, ratios)
    reports = []
    for l, row in zip(l_list, rows):
        measured = dict(row)
        measured.update({
            "slope": -vfit.rate,
            "r_squared": vfit.r_squared,
            "value_rate": vfit.rate,
            "value_amplitude": vfit.amplitude,
            "value_envelope": float(vfit.envelope(l)),
            "mass_rate": mfit.rate,
            "mass_amplitude": mfit.amplitude,
            "mass_r_squared": mfit.r_squared,
            "mass_envelope": float(mfit.envelope(l)),
        })
        reports.append(_report(lemma, {"h": h, "l": l, "l_list": l_list, "dx": opts.dx}, measured))
    return reports


def check_neck_middle_decay(h: float, l_list: Sequence[float], opts: SolverOptions | None = None,
                            h0: float = DEFAULT_H0) -> list:
    """Middle-of-neck value and mass ratio as the neck ``[-l, l]`` grows.

    Each neck sits between two cores (see :func:`neck_host`). Per length the
    report records ``v(0)`` and ``int_{|x|<l/2} v^2 / int_{l-2<|x|<l} v^2``;
    both are fitted to ``A exp(-a l)``.
    """
    l_list = _check_necks(h, l_list, h0)
    opts = _default_opts(opts)

    def one(l):
        D = neck_host(h, l)
        res = minimize_log_sobolev(D, opts)
        lo, hi = D.segment_bounds(D.find("N")[0])
        c = 0.5 * (lo + hi)
        v = res.extremal
        mid = mass(v, c - 0.5 * l, c + 0.5 * l)
        ends = mass(v, lo, lo + 2.0) + mass(v, hi - 2.0, hi)
        return {"value": float(np.interp(c, v.x, v.values)), "mid_mass": mid, "end_mass": ends,
                "mass_ratio": mid / ends, "lambda": res.lam, "converged": res.converged,
                "residual": res.residual}

    rows = map_tasks(one, l_list)
    return _decay_reports("3.2", h, l_list, rows, opts)


def check_neck_end_decay(h: float, l_list: Sequence[float], opts: SolverOptions | None = None,
                         h0: float = DEFAULT_H0) -> list:
    """Neck ``[0, l]`` with a Dirichlet right end: far-half mass against the first unit."""
    l_list = _check_necks(h, l_list, h0)
    opts = _default_opts(opts)

    def one(l):
        D = neck_end_host(h, l)
        res = minimize_log_sobolev(D, opts)
        lo, hi = D.segment_bounds(D.find("N")[0])
        v = res.extremal
        far = mass(v, lo + 0.5 * l, hi)
        near = mass(v, lo, lo + 1.0)
        return {"value": float(np.interp(lo + 0.5 * l, v.x, v.values)), "far_mass": far,
                "near_mass": near, "mass_ratio": far / near, "lambda": res.lam,
                "converged": res.converged, "residual": res.residual}

    rows = map_tasks(one, l_list)
    return _decay_reports("3.3", h, l_list, rows, opts)


# ---------------------------------------------------------------------------
# cutoff comparison


def ramp_cutoff(grid, lo: float, hi: float, width: float = 1.0) -> DiscreteField:
    """0 outside ``[lo, hi]``, 1 at distance ``>= width`` inside, linear between."""
    return sample(grid, lambda x: np.clip(np.minimum(x - lo, hi - x) / width, 0.0, 1.0), enforce_bc=False)


def check_cutoff_comparison(res: SpectralResult, E: DomainChain, eta: DiscreteField,
                            offset: float = 0.0, opts: SolverOptions | None = None) -> LemmaReport:
    """Compare ``λ(E)`` with the cutoff bound built from the extremal on ``F``.

    ``E`` occupies ``[offset, offset + E.length]`` of ``F`` (the domain of
    ``res``). Checks ``λ(E) N <= λ(F) N + 4 int v^2 |η'|^2 w - int (ηv)^2 ln η^2 w``
    with ``N = int (ηv)^2 w``.
    """
    _require_converged(res)
    v = res.extremal
    grid = v.grid
    if eta.grid is not grid:
        raise InvalidCutoff("cutoff must live on the extremal's grid")
    e = eta.values
    if not np.all(np.isfinite(e)) or e.min() < 0 or e.max() > 1:
        raise InvalidCutoff("cutoff values must lie in [0, 1]")
    lo, hi = offset, offset + E.length
    tol = 1e-9 * max(1.0, grid.domain.length)
    outside = (grid.x < lo - tol) | (grid.x > hi + tol)
    F = grid.domain
    for end, bc, f_end in ((lo, E.left_bc, 0.0), (hi, E.right_bc, F.length)):
        # a Dirichlet end of E strictly inside F must see a vanishing cutoff
        if bc == "dirichlet" and abs(end - f_end) > tol:
            outside |= np.abs(grid.x - end) <= tol
    if np.any(e[outside] != 0):
        raise InvalidCutoff("cutoff is not supported in the subdomain")
    vals = v.values
    ev = e * vals
    N = float(np.dot(grid.q, ev * ev))
    if N <= 0:
        raise InvalidCutoff("cutoff annihilates the extremal")
    slope = (e[grid.cr] - e[grid.cl]) / grid.clen
    v2 = 0.5 * (vals[grid.cl] ** 2 + vals[grid.cr] ** 2)
    grad_term = 4.0 * float(np.sum(grid.cw * grid.clen * slope ** 2 * v2))
    with np.errstate(divide="ignore", invalid="ignore"):
        log_term = np.where(e > 0, ev * ev * np.log(np.where(e > 0, e * e, 1.0)), 0.0)
    ent_term = float(np.dot(grid.q, log_term))
    lam_E = minimize_log_sobolev(E, _default_opts(opts, dx=grid.dx)).lam
    lhs = lam_E * N
    rhs = res.lam * N + grad_term - ent_term
    measured = {"lambda_E": lam_E, "lambda_F": res.lam, "norm_sq": N, "gradient_term": grad_term,
                "entropy_term": ent_term, "lhs": lhs, "rhs": rhs, "slack": rhs - lhs}
    return _report("3.4", {"offset": offset, "E_length": E.length, "dx": grid.dx}, measured)


# ---------------------------------------------------------------------------
# neck extension


def check_neck_extension(base: DomainChain, neck_label: str, l_list: Sequence[float],
                         opts: SolverOptions | None = None) -> list:
    """``λ`` as the labeled round neck takes each length in ``l_list``.

    Consecutive differences ``λ(l_i) - λ(l_{i+1})`` must be nonnegative (up to
    rounding) and are fitted to ``A exp(-a l_i)`` over the differences that
    clear the rounding floor. One report per consecutive pair.
    """
    idx = base.find(neck_label)
    if not idx:
        raise UnknownSegment(neck_label)
    idx = idx[0]
    if base.segments[idx].profile != "sphere2":
        raise InvalidParameter(f"segment {neck_label!r} is not a round neck")
    l_list = sorted(float(l) for l in l_list)
    if len(l_list) < 3:
        raise InsufficientData("an extension fit needs at least three neck lengths")
    opts = _default_opts(opts)
    results = map_tasks(lambda l: minimize_log_sobolev(resize_segment(base, idx, l), opts), l_list)
    lams = [r.lam for r in results]
    diffs = [a - b for a, b in zip(lams, lams[1:])]
    noise = 1e-12 * (1.0 + max(abs(x) for x in lams))
    live = [(l, d) for l, d in zip(l_list, diffs) if d > noise]
    if len(live) < 3:
        raise InsufficientData("fewer than three differences clear the rounding floor; use shorter necks")
    fit = envelope_fit([l for l, _ in live], [d for _, d in live])
    reports = []
    for l, l_next, d, res in zip(l_list, l_list[1:], diffs, results):
        measured = {"lambda": res.lam, "lambda_next": res.lam - d, "difference": d, "noise": noise,
                    "rate": fit.rate, "amplitude": fit.amplitude, "r_squared": fit.r_squared,
                    "envelope": float(fit.envelope(l)), "converged": res.converged,
                    "lambda_nonpositive": res.lam <= 0}
        reports.append(_report("3.5", {"label": neck_label, "l": l, "l_next": l_next, "dx": opts.dx},
                               measured))
    return reports


# ---------------------------------------------------------------------------
# pinch continuity


def check_pinch_continuity(family: PinchFamily, p: float, deltas: Sequence[float],
                           opts: SolverOptions | None = None) -> LemmaReport:
    """``|λ(p + δ) - λ(p)|`` along a decreasing list of ``δ``.

    Passes iff the differences shrink monotonically within ``1e-5``. Whether
    ``λ`` is non-increasing in ``p`` is recorded but not judged.
    """
    if not (np.isfinite(p) and p >= 0):
        raise InvalidParameter(f"pinch exponent must be >= 0, got {p!r}")
    deltas = [float(d) for d in deltas]
    if not deltas or any(d < 0 for d in deltas) or any(b >= a for a, b in zip(deltas, deltas[1:])):
        raise InvalidParameter("deltas must be nonnegative and strictly decreasing")
    opts = _default_opts(opts)
    ps = [p] + [p + d for d in deltas]
    lams = map_tasks(lambda x: minimize_log_sobolev(apply_pinch(family, x), opts).lam, ps)
    lam0 = lams[0]
    diffs = [abs(l - lam0) for l in lams[1:]]
    order = sorted(zip(ps, lams))
    nonincreasing = all(b <= a + CONTINUITY_NOISE for (_, a), (_, b) in zip(order, order[1:]))
    measured = {"lambda_p": lam0, "lambdas": lams[1:], "differences": diffs,
                "nonincreasing_in_p": nonincreasing}
    return _report("2.5", {"p": p, "deltas": deltas, "dx": opts.dx}, measured)


# ---------------------------------------------------------------------------
# collapsing flat tube


def tube_test_function(h: float):
    """Trapezoidal profile on ``[0, 1]``: linear ramps of width 1/4 and a
    plateau chosen so the squared norm on ``H(h, 0, 1)`` is 1."""
    top = math.sqrt(3.0) / (math.sqrt(8.0) * math.pi * h)

    def v(x):
        x = np.asarray(x, dtype=float)
        return top * np.clip(np.minimum(4.0 * x, 4.0 * (1.0 - x)), 0.0, 1.0)

    return v


def tube_entropy_exact(h: float) -> float:
    """Closed-form ``-int v^2 ln v^2`` of :func:`tube_test_function`."""
    return -(math.log(3.0 / (8.0 * math.pi ** 2)) - math.log(h * h) - 1.0 / 6.0)


TUBE_DIRICHLET_EXACT = 48.0


def check_tube_collapse(h_list: Sequence[float] = (1e-1, 1e-2, 1e-3), test_dx: float = 1e-4,
                        opts: SolverOptions | None = None) -> list:
    """Test-function integrals and ``λ(H(h, 0, 1))`` for shrinking ``h``.

    One report per ``h`` (integrals against their closed forms, ``λ`` below
    the test value) plus, given two or more scales, a ``3.6-h`` report requiring ``λ`` to drop by at
    least 1 per factor-10 step of ``h``. The fitted coefficient of
    ``ln h^2`` in the entropy part is recorded there.
    """
    h_list = [float(h) for h in h_list]
    opts = _default_opts(opts, dx=1e-3)

    def one(h):
        D = chain([make_flat_tube(h, 0.0, 1.0)])
        v = sample(build_grid(D, test_dx), tube_test_function(h))
        parts = evaluate_log_sobolev(v.normalized(), D)
        res = minimize_log_sobolev(D, opts)
        return {
            "norm_sq": v.norm_sq(),
            "dirichlet_part": parts.dirichlet_part,
            "dirichlet_exact": TUBE_DIRICHLET_EXACT,
            "entropy_part": parts.entropy_part,
            "entropy_exact": tube_entropy_exact(h),
            "test_value": parts.total,
            "lambda": res.lam,
            "converged": res.converged,
        }

    rows = map_tasks(one, h_list)
    reports = [_report("3.6", {"h": h, "test_dx": test_dx, "dx": opts.dx}, row)
               for h, row in zip(h_list, rows)]
    if len(h_list) < 2:
        return reports
    order = sorted(zip(h_list, rows), key=lambda t: -t[0])
    drops = [a["lambda"] - b["lambda"] for (_, a), (_, b) in zip(order, order[1:])]
    coeff = line_fit([math.log(h * h) for h, _ in order], [r["entropy_part"] for _, r in order])[0]
    reports.append(_report("3.6-h", {"h": [h for h, _ in order]},
                           {"lambdas": [r["lambda"] for _, r in order], "drops": drops,
                            "log_h2_coefficient": coeff}))
    return reports
