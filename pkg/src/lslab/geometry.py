"""Symmetry-reduced model geometries.

Every domain is a warped product of a 2D fiber (round sphere, flat torus or a
point) over an interval. Functions constant along the fiber reduce the
functional to a weighted 1D problem, so a domain is described by the fiber
area ``w(x)`` and the scalar curvature ``R(x)`` along the longitudinal
coordinate ``x``.

Scalar curvature uses the normalization in which the unit round 2-sphere has
``R = 1`` (so ``h^2 S^2`` has ``R = 1/h^2``), not the geometric value 2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .errors import InvalidParameter, JunctionMismatch, ParseError, UnsupportedPinch

FIBER_KINDS = ("sphere2", "torus2", "point")
BOUNDARY_CONDITIONS = ("dirichlet", "neumann", "periodic")
JUNCTION_POLICIES = ("continuous", "kink_allowed")

JUNCTION_RTOL = 1e-9
COLLAR_LENGTH = 0.2
CORE_LENGTH = 2.0


def fiber_volume(kind: str, h: float | None = None) -> float:
    if kind == "sphere2":
        return 4.0 * math.pi * _positive(h, "h") ** 2
    if kind == "torus2":
        return 4.0 * math.pi**2 * _positive(h, "h") ** 2
    if kind == "point":
        return 1.0
    raise InvalidParameter(f"unknown fiber kind {kind!r}")


def fiber_curvature(kind: str, h: float | None = None) -> float:
    if kind == "sphere2":
        return 1.0 / _positive(h, "h") ** 2
    if kind in ("torus2", "point"):
        if kind == "torus2":
            _positive(h, "h")
        return 0.0
    raise InvalidParameter(f"unknown fiber kind {kind!r}")


def _positive(value, name):
    if value is None or not np.isfinite(value) or value <= 0:
        raise InvalidParameter(f"{name} must be a positive finite number, got {value!r}")
    return float(value)


@dataclass(frozen=True)
class FiberProfile:
    kind: str
    h: float | None = None

    def __post_init__(self):
        if self.kind not in FIBER_KINDS:
            raise InvalidParameter(f"unknown fiber kind {self.kind!r}")
        if self.kind != "point":
            _positive(self.h, "h")

    @property
    def volume(self) -> float:
        return fiber_volume(self.kind, self.h)

    @property
    def curvature(self) -> float:
        return fiber_curvature(self.kind, self.h)


# ---------------------------------------------------------------------------
# Profile functions of the local coordinate s in [0, length]. Frozen
# dataclasses rather than lambdas so domains compare, hash and pickle.


def smoothstep(t):
    """C-infinity step: 0 for t <= 0, 1 for t >= 1."""
    t = np.clip(np.asarray(t, dtype=float), 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        a = np.where(t > 0, np.exp(-1.0 / np.where(t > 0, t, 1.0)), 0.0)
        b = np.where(t < 1, np.exp(-1.0 / np.where(t < 1, 1.0 - t, 1.0)), 0.0)
    return a / (a + b)


@dataclass(frozen=True)
class Constant:
    value: float

    def __call__(self, s):
        return np.full(np.shape(s), self.value, dtype=float)


@dataclass(frozen=True)
class Blend:
    """Smooth transition from ``start`` to ``end`` over ``[0, length]``."""

    start: float
    end: float
    length: float

    def __call__(self, s):
        return self.start + (self.end - self.start) * smoothstep(np.asarray(s) / self.length)


@dataclass(frozen=True)
class CoreRadius:
    h: float
    length: float

    def __call__(self, s):
        bump = np.sin(np.pi * np.asarray(s, dtype=float) / self.length) ** 2
        return self.h + (1.0 - self.h) * bump


@dataclass(frozen=True)
class CoreWeight:
    radius: CoreRadius

    def __call__(self, s):
        return 4.0 * np.pi * self.radius(s) ** 2


@dataclass(frozen=True)
class CoreCurvature:
    radius: CoreRadius

    def __call__(self, s):
        return 1.0 / self.radius(s) ** 2


@dataclass(frozen=True)
class Reflected:
    func: Callable
    length: float

    def __call__(self, s):
        return self.func(self.length - np.asarray(s, dtype=float))


@dataclass(frozen=True)
class Scaled:
    """``factor * func(s / stretch)``."""

    func: Callable
    stretch: float
    factor: float

    def __call__(self, s):
        return self.factor * self.func(np.asarray(s, dtype=float) / self.stretch)


@dataclass(frozen=True)
class PinchProfile:
    """Pinching profile over ``[a, b]``.

    Equal to 1 outside the region and 1/2 on a centered plateau covering the
    fraction ``plateau`` of it (default: the middle third); strictly between
    on the two ramps, with C-infinity transitions.
    """

    a: float
    b: float
    plateau: float = 1.0 / 3.0

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        ramp = 0.5 * (1.0 - self.plateau) * (self.b - self.a)
        rise = smoothstep((x - self.a) / ramp)
        fall = smoothstep((self.b - x) / ramp)
        return 1.0 - 0.5 * np.minimum(rise, fall)


@dataclass(frozen=True)
class Pinched:
    func: Callable
    theta: Callable
    offset: float
    p: float

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        return self.func(s) * self.theta(self.offset + s) ** self.p


# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Segment:
    """A weighted interval ``[0, length]``.

    ``recipe`` records how the segment was built (sorted key/value pairs) so a
    domain can be written back to its JSON spec.
    """

    length: float
    weight: Callable
    curvature: Callable
    label: str = ""
    profile: str = "custom"
    recipe: tuple = field(default=(), repr=False)

    def __post_init__(self):
        _positive(self.length, "segment length")

    @property
    def spec(self) -> dict:
        return dict(self.recipe)

    def endpoint_weights(self):
        w = self.weight(np.array([0.0, self.length]))
        return float(w[0]), float(w[1])

    def reflected(self) -> "Segment":
        spec = self.spec
        if spec.pop("reflected", False) is False:
            spec["reflected"] = True
        return replace(
            self,
            weight=Reflected(self.weight, self.length),
            curvature=Reflected(self.curvature, self.length),
            recipe=_freeze(spec),
        )

    def resized(self, length: float) -> "Segment":
        """Same constant profile over a new length (necks and tubes only)."""
        if self.profile not in FIBER_KINDS:
            raise InvalidParameter(f"cannot resize a {self.profile!r} segment")
        spec = self.spec
        if "scale" in spec or "pinch" in spec:
            raise InvalidParameter("cannot resize a scaled or pinched segment")
        spec["B"] = spec["A"] + float(length)
        return replace(self, length=float(length), recipe=_freeze(spec))


def _freeze(spec: dict) -> tuple:
    return tuple(sorted(spec.items()))


def make_segment(profile: FiberProfile, A: float, B: float, label: str = "") -> Segment:
    if not (np.isfinite(A) and np.isfinite(B)) or B <= A:
        raise InvalidParameter(f"empty or invalid interval [{A}, {B}]")
    spec = {"profile": profile.kind, "A": float(A), "B": float(B), "label": label}
    if profile.kind != "point":
        spec["h"] = float(profile.h)
    return Segment(
        length=float(B - A),
        weight=Constant(profile.volume),
        curvature=Constant(profile.curvature),
        label=label,
        profile=profile.kind,
        recipe=_freeze(spec),
    )


def make_round_neck(h: float, A: float, B: float, label: str = "neck") -> Segment:
    """``h^2 S^2 x [A, B]``: weight ``4 pi h^2``, curvature ``1/h^2``."""
    return make_segment(FiberProfile("sphere2", _positive(h, "h")), A, B, label)


def make_flat_tube(h: float, A: float, B: float, label: str = "tube") -> Segment:
    """``h^2 (S^1 x S^1) x [A, B]``: weight ``4 pi^2 h^2``, curvature 0."""
    return make_segment(FiberProfile("torus2", _positive(h, "h")), A, B, label)


def make_line(A: float, B: float, label: str = "line") -> Segment:
    """Flat 1D interval (point fiber)."""
    return make_segment(FiberProfile("point"), A, B, label)


def make_core_surrogate(h: float, label: str = "X") -> Segment:
    """Fixed length-2 stand-in for the three-holed sphere core.

    The fiber radius runs ``h -> 1 -> h`` as ``h + (1-h) sin^2(pi s/2)``, so
    the ends match a round neck of scale ``h`` (weight and curvature, with
    zero slope) and the middle is the unit sphere.
    """
    h = _positive(h, "h")
    radius = CoreRadius(h, CORE_LENGTH)
    return Segment(
        length=CORE_LENGTH,
        weight=CoreWeight(radius),
        curvature=CoreCurvature(radius),
        label=label,
        profile="core",
        recipe=_freeze({"profile": "core", "h": h, "label": label}),
    )


def make_collar(h: float, start: str, end: str, length: float = COLLAR_LENGTH, label: str = "collar") -> Segment:
    """Smoothing collar between two fiber kinds of the same scale ``h``."""
    a, b = FiberProfile(start, h), FiberProfile(end, h)
    return Segment(
        length=_positive(length, "collar length"),
        weight=Blend(a.volume, b.volume, length),
        curvature=Blend(a.curvature, b.curvature, length),
        label=label,
        profile="collar",
        recipe=_freeze({"profile": "collar", "h": float(h), "from": start, "to": end,
                        "length": float(length), "label": label}),
    )


def scale_segment(seg: Segment, c: float) -> Segment:
    """Image of ``seg`` under the metric scaling ``g -> c g`` (2D fibers)."""
    c = _positive(c, "scale")
    root = math.sqrt(c)
    spec = seg.spec
    spec["scale"] = spec.get("scale", 1.0) * c
    return replace(
        seg,
        length=seg.length * root,
        weight=Scaled(seg.weight, root, c),
        curvature=Scaled(seg.curvature, root, 1.0 / c),
        recipe=_freeze(spec),
    )


@dataclass(frozen=True)
class DomainChain:
    segments: tuple
    left_bc: str = "dirichlet"
    right_bc: str = "dirichlet"
    junction_policy: str = "continuous"
    pinch: tuple | None = None  # (a, b, p, plateau), recorded for serialization

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(self.segments))
        if not self.segments:
            raise InvalidParameter("a chain needs at least one segment")
        for bc in (self.left_bc, self.right_bc):
            if bc not in BOUNDARY_CONDITIONS:
                raise InvalidParameter(f"unknown boundary condition {bc!r}")
        if self.junction_policy not in JUNCTION_POLICIES:
            raise InvalidParameter(f"unknown junction policy {self.junction_policy!r}")
        if (self.left_bc == "periodic") != (self.right_bc == "periodic"):
            raise InvalidParameter("periodic must be set on both ends")
        if self.junction_policy == "continuous":
            pairs = list(zip(self.segments[:-1], self.segments[1:]))
            if self.periodic:
                pairs.append((self.segments[-1], self.segments[0]))
            for k, (left, right) in enumerate(pairs):
                wl = left.endpoint_weights()[1]
                wr = right.endpoint_weights()[0]
                if abs(wl - wr) > JUNCTION_RTOL * max(abs(wl), abs(wr)):
                    raise JunctionMismatch(
                        f"weight jump at junction {k} ({left.label!r} -> {right.label!r}): {wl!r} vs {wr!r}"
                    )

    @property
    def periodic(self) -> bool:
        return self.left_bc == "periodic"

    @property
    def length(self) -> float:
        return float(math.fsum(s.length for s in self.segments))

    @property
    def offsets(self) -> np.ndarray:
        """Global coordinate of each segment's left end."""
        return np.concatenate([[0.0], np.cumsum([s.length for s in self.segments])[:-1]])

    def locate(self, x):
        """Segment index and local coordinate for global coordinates ``x``."""
        x = np.asarray(x, dtype=float)
        ends = np.cumsum([s.length for s in self.segments])
        idx = np.minimum(np.searchsorted(ends, x, side="right"), len(self.segments) - 1)
        return idx, x - self.offsets[idx]

    def _evaluate(self, attr, x):
        x = np.asarray(x, dtype=float)
        idx, s = self.locate(x)
        out = np.empty(x.shape)
        for k, seg in enumerate(self.segments):
            m = idx == k
            if np.any(m):
                out[m] = getattr(seg, attr)(s[m])
        return out

    def weight_at(self, x):
        return self._evaluate("weight", x)

    def curvature_at(self, x):
        return self._evaluate("curvature", x)

    def regions(self):
        """Labels in order of first appearance."""
        seen = []
        for s in self.segments:
            if s.label not in seen:
                seen.append(s.label)
        return seen

    def segment_bounds(self, index: int):
        start = float(self.offsets[index])
        return start, start + self.segments[index].length

    def find(self, label: str):
        return [k for k, s in enumerate(self.segments) if s.label == label]

    def reflected(self) -> "DomainChain":
        pinch = None
        if self.pinch is not None:
            a, b, p, plateau = self.pinch
            pinch = (self.length - b, self.length - a, p, plateau)
        return DomainChain(
            tuple(s.reflected() for s in reversed(self.segments)),
            self.right_bc,
            self.left_bc,
            self.junction_policy,
            pinch,
        )

    def scaled(self, c: float) -> "DomainChain":
        pinch = None
        if self.pinch is not None:
            root = math.sqrt(c)
            a, b, p, plateau = self.pinch
            pinch = (a * root, b * root, p, plateau)
        return replace(self, segments=tuple(scale_segment(s, c) for s in self.segments), pinch=pinch)


def resize_segment(D: DomainChain, index: int, length: float) -> DomainChain:
    """Replace segment ``index`` by the same profile over a new length.

    A recorded pinch region to the right of the segment moves with it.
    """
    seg = D.segments[index]
    delta = float(length) - seg.length
    pinch = D.pinch
    if pinch is not None:
        a, b, p, plateau = pinch
        lo, hi = D.segment_bounds(index)
        if a < hi - 1e-12 and b > lo + 1e-12:
            raise UnsupportedPinch("cannot resize a segment inside the pinch region")
        if a >= hi - 1e-12:
            pinch = (a + delta, b + delta, p, plateau)
    segs = list(D.segments)
    segs[index] = seg.resized(length)
    return replace(D, segments=tuple(segs), pinch=pinch)


def chain(segments: Sequence[Segment], left_bc="dirichlet", right_bc="dirichlet",
          junction_policy="continuous") -> DomainChain:
    """Join segments end to end; the global coordinate is cumulative arc length."""
    return DomainChain(tuple(segments), left_bc, right_bc, junction_policy)


def concatenate(chains: Sequence[DomainChain], left_bc="dirichlet", right_bc="dirichlet") -> DomainChain:
    segs = [s for c in chains for s in c.segments]
    policy = "kink_allowed" if any(c.junction_policy == "kink_allowed" for c in chains) else "continuous"
    return DomainChain(tuple(segs), left_bc, right_bc, policy)


@dataclass(frozen=True)
class PinchFamily:
    base: DomainChain
    region: tuple
    plateau: float = 1.0 / 3.0
    theta: Callable | None = None

    def __post_init__(self):
        a, b = map(float, self.region)
        if not b > a:
            raise InvalidParameter(f"empty pinch region {self.region!r}")
        object.__setattr__(self, "region", (a, b))
        if self.theta is None:
            object.__setattr__(self, "theta", PinchProfile(a, b, self.plateau))
        if self.base.pinch is not None:
            raise InvalidParameter("pinch family base is already pinched")
        _check_pinch_support(self.base, a, b)


def _check_pinch_support(base: DomainChain, a: float, b: float):
    if a < 0 or b > base.length * (1 + 1e-12):
        raise UnsupportedPinch(f"pinch region [{a}, {b}] leaves the chain")
    for k, seg in enumerate(base.segments):
        lo, hi = base.segment_bounds(k)
        overlap = min(hi, b) - max(lo, a)
        if overlap > 1e-12 and seg.profile != "torus2":
            raise UnsupportedPinch(f"pinch region overlaps {seg.profile!r} segment {seg.label!r}")
        if overlap > 1e-12 and "pinch" in seg.spec:
            raise UnsupportedPinch(f"segment {seg.label!r} is already pinched")


def _unwind_region(spec, length, a, b):
    """Map a local region back to the frame before scaling and reflection."""
    root = math.sqrt(spec.get("scale", 1.0))
    a, b, length = a / root, b / root, length / root
    if spec.get("reflected", False):
        a, b = length - b, length - a
    return (a, b)


def apply_pinch(family: PinchFamily, p: float) -> DomainChain:
    """Scale the torus fiber area by ``theta^p`` on the pinch region."""
    if not np.isfinite(p) or p < 0:
        raise InvalidParameter(f"pinch exponent must be >= 0, got {p!r}")
    if p == 0:
        return family.base
    a, b = family.region
    base = family.base
    segs = []
    for k, seg in enumerate(base.segments):
        lo, hi = base.segment_bounds(k)
        if min(hi, b) - max(lo, a) > 1e-12:
            spec = seg.spec
            spec["pinch"] = _unwind_region(spec, seg.length, a - lo, b - lo) + (float(p), family.plateau)
            seg = replace(seg, weight=Pinched(seg.weight, family.theta, lo, float(p)), recipe=_freeze(spec))
        segs.append(seg)
    return replace(base, segments=tuple(segs), pinch=(a, b, float(p), family.plateau))


@dataclass(frozen=True)
class DisconnectedDomain:
    components: tuple

    def __post_init__(self):
        object.__setattr__(self, "components", tuple(self.components))
        if not self.components:
            raise InvalidParameter("a disjoint union needs at least one component")

    @property
    def length(self) -> float:
        return float(math.fsum(c.length for c in self.components))


def disjoint_union(domains: Sequence[DomainChain]) -> DisconnectedDomain:
    if not domains:
        raise InvalidParameter("empty list of domains")
    return DisconnectedDomain(tuple(domains))


# ---------------------------------------------------------------------------
# JSON domain specs


def segment_from_spec(spec: dict) -> Segment:
    try:
        kind = spec["profile"]
        label = spec.get("label", "")
        if kind in FIBER_KINDS:
            prof = FiberProfile(kind, spec.get("h"))
            seg = make_segment(prof, float(spec["A"]), float(spec["B"]), label)
        elif kind == "core":
            seg = make_core_surrogate(float(spec["h"]), label)
        elif kind == "collar":
            seg = make_collar(float(spec["h"]), spec["from"], spec["to"],
                              float(spec.get("length", COLLAR_LENGTH)), label)
        else:
            raise ParseError(f"unknown segment profile {kind!r}")
    except KeyError as exc:
        raise ParseError(f"segment spec missing field {exc.args[0]!r}") from None
    if "pinch" in spec:
        a, b, p, plateau = (float(t) for t in spec["pinch"])
        local = _freeze(dict(seg.spec, pinch=(a, b, p, plateau)))
        seg = replace(seg, weight=Pinched(seg.weight, PinchProfile(a, b, plateau), 0.0, p), recipe=local)
    if spec.get("reflected", False):
        seg = seg.reflected()
    if "scale" in spec:
        seg = scale_segment(seg, float(spec["scale"]))
    return seg


def _plain(spec: dict) -> dict:
    return {k: list(v) if isinstance(v, tuple) else v for k, v in spec.items()}


def chain_to_spec(D: DomainChain) -> dict:
    segments = [s.spec for s in D.segments]
    if D.pinch is not None:
        # the chain-level record rebuilds the pinch exactly
        for spec in segments:
            spec.pop("pinch", None)
    out = {
        "segments": [_plain(spec) for spec in segments],
        "left_bc": D.left_bc,
        "right_bc": D.right_bc,
        "junction_policy": D.junction_policy,
    }
    if D.pinch is not None:
        a, b, p, plateau = D.pinch
        out["pinch"] = {"region": [a, b], "p": p, "plateau": plateau}
    return out


def chain_from_spec(spec: dict) -> DomainChain:
    if "segments" not in spec or not isinstance(spec["segments"], list):
        raise ParseError("domain spec needs a 'segments' list")
    segs = [segment_from_spec(s) for s in spec["segments"]]
    base = DomainChain(
        tuple(segs),
        spec.get("left_bc", "dirichlet"),
        spec.get("right_bc", "dirichlet"),
        spec.get("junction_policy", "continuous"),
    )
    pinch = spec.get("pinch")
    if pinch:
        family = PinchFamily(base, tuple(pinch["region"]), float(pinch.get("plateau", 1.0 / 3.0)))
        return apply_pinch(family, float(pinch["p"]))
    return base


# ---------------------------------------------------------------------------
# Composite hosts

TUBE_HALF_LENGTH = 2.0
HANDBAG_PLATEAU = 0.5
STUB_LENGTH = 1.0


def make_handbag(h: float, neck_length: float, left_neck: float | None = None) -> DomainChain:
    """One hand-bag component: ``Z | X | H | X | Y`` with Dirichlet ends.

    Necks ``Z`` and ``Y`` are round necks of scale ``h`` (``Z`` may be given
    its own length); ``X`` is the core surrogate; ``H`` is the flat tube
    ``[-2, 2]`` with sphere-to-torus collars on both sides.
    """
    left = neck_length if left_neck is None else left_neck
    core = make_core_surrogate(h, "X")
    return chain([
        make_round_neck(h, 0.0, left, "Z"),
        core,
        make_collar(h, "sphere2", "torus2", label="H"),
        make_flat_tube(h, -TUBE_HALF_LENGTH, TUBE_HALF_LENGTH, "H"),
        make_collar(h, "torus2", "sphere2", label="H"),
        core.reflected(),
        make_round_neck(h, 0.0, neck_length, "Y"),
    ])


def handbag_pinch(D: DomainChain, plateau: float = HANDBAG_PLATEAU) -> PinchFamily:
    """Pinch family on the torus segment of a hand-bag.

    With the default plateau the profile is 1/2 on the middle half ``[-1, 1]``
    of the tube.
    """
    tubes = [k for k, s in enumerate(D.segments) if s.profile == "torus2"]
    if len(tubes) != 1:
        raise UnsupportedPinch(f"expected one torus segment, found {len(tubes)}")
    return PinchFamily(D, D.segment_bounds(tubes[0]), plateau)


def neck_host(h: float, l: float, stub: float = STUB_LENGTH) -> DomainChain:
    """Neck ``[-l, l]`` (label ``N``) between two cores, short Dirichlet stubs outside."""
    core = make_core_surrogate(h, "X")
    return chain([
        make_round_neck(h, 0.0, stub, "stub"),
        core,
        make_round_neck(h, -l, l, "N"),
        core.reflected(),
        make_round_neck(h, 0.0, stub, "stub"),
    ])


def neck_end_host(h: float, l: float, stub: float = STUB_LENGTH) -> DomainChain:
    """Stub, core, then the neck ``[0, l]`` (label ``N``) ending in a Dirichlet end."""
    return chain([
        make_round_neck(h, 0.0, stub, "stub"),
        make_core_surrogate(h, "X"),
        make_round_neck(h, 0.0, l, "N"),
    ])
