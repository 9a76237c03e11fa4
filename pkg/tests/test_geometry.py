import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lslab.errors import InvalidParameter, JunctionMismatch, ParseError, UnsupportedPinch
from lslab.geometry import (
    COLLAR_LENGTH,
    DomainChain,
    FiberProfile,
    PinchFamily,
    apply_pinch,
    chain,
    chain_from_spec,
    chain_to_spec,
    concatenate,
    disjoint_union,
    fiber_curvature,
    fiber_volume,
    handbag_pinch,
    make_collar,
    make_core_surrogate,
    make_flat_tube,
    make_handbag,
    make_line,
    make_round_neck,
    neck_host,
    resize_segment,
    segment_from_spec,
)

positive_h = st.floats(min_value=1e-3, max_value=10.0, allow_nan=False)


def const(seg, attr):
    vals = getattr(seg, attr)(np.linspace(0, seg.length, 7))
    assert np.ptp(vals) == 0
    return vals[0]


class TestFibers:
    @given(positive_h)
    def test_closed_forms(self, h):
        assert fiber_volume("sphere2", h) == pytest.approx(4 * math.pi * h * h, rel=1e-15)
        assert fiber_volume("torus2", h) == pytest.approx(4 * math.pi ** 2 * h * h, rel=1e-15)
        assert fiber_curvature("sphere2", h) == pytest.approx(1 / (h * h), rel=1e-15)
        assert fiber_curvature("torus2", h) == 0.0

    def test_point(self):
        assert fiber_volume("point") == 1.0
        assert fiber_curvature("point") == 0.0

    @pytest.mark.parametrize("h", [0.0, -1.0, math.nan, None])
    def test_bad_scale(self, h):
        with pytest.raises(InvalidParameter):
            FiberProfile("sphere2", h)

    def test_unknown_kind(self):
        with pytest.raises(InvalidParameter):
            fiber_volume("cube")


class TestSegments:
    def test_round_neck_unit(self):
        s = make_round_neck(1.0, 0.0, 2.0)
        assert s.length == 2.0
        assert const(s, "weight") == pytest.approx(4 * math.pi)
        assert const(s, "curvature") == 1.0

    def test_round_neck_thin(self):
        assert const(make_round_neck(0.1, 0.0, 5.0), "curvature") == pytest.approx(100.0)

    def test_round_neck_half(self):
        s = make_round_neck(0.5, -3.0, 3.0)
        assert s.length == 6.0
        assert const(s, "weight") == pytest.approx(math.pi)

    def test_flat_tube(self):
        assert const(make_flat_tube(1.0, 0.0, 1.0), "weight") == pytest.approx(4 * math.pi ** 2)
        assert const(make_flat_tube(0.5, 0.0, 1.0), "weight") == pytest.approx(math.pi ** 2)
        s = make_flat_tube(1.0, -2.0, 2.0)
        assert s.length == 4.0 and const(s, "curvature") == 0.0

    @pytest.mark.parametrize("args", [(0.0, 0.0, 1.0), (1.0, 1.0, 1.0), (1.0, 2.0, 1.0), (-1.0, 0.0, 1.0)])
    def test_invalid(self, args):
        with pytest.raises(InvalidParameter):
            make_round_neck(*args)
        with pytest.raises(InvalidParameter):
            make_flat_tube(*args)

    def test_core_ends_and_middle(self):
        h = 0.1
        core = make_core_surrogate(h)
        w = core.weight(np.array([0.0, 1.0, 2.0]))
        r = core.curvature(np.array([0.0, 1.0, 2.0]))
        assert w[0] == pytest.approx(4 * math.pi * h * h, rel=1e-14)
        assert w[2] == pytest.approx(4 * math.pi * h * h, rel=1e-12)
        assert r[0] == pytest.approx(1 / h ** 2)
        assert w[1] == pytest.approx(4 * math.pi)
        assert r[1] == pytest.approx(1.0)

    def test_neck_core_neck_continuous(self):
        h = 0.2
        D = chain([make_round_neck(h, 0, 3), make_core_surrogate(h), make_round_neck(h, 0, 3)])
        assert D.length == pytest.approx(8.0)

    def test_collar_blends(self):
        c = make_collar(0.3, "sphere2", "torus2")
        w0, w1 = c.endpoint_weights()
        assert c.length == COLLAR_LENGTH
        assert w0 == pytest.approx(fiber_volume("sphere2", 0.3))
        assert w1 == pytest.approx(fiber_volume("torus2", 0.3))


class TestChains:
    def test_single_segment(self):
        s = make_round_neck(0.5, 0, 3)
        D = chain([s])
        assert D.length == 3.0 and D.segments == (s,)

    def test_mismatch_rejected(self):
        with pytest.raises(JunctionMismatch):
            chain([make_round_neck(0.5, 0, 1), make_round_neck(0.4, 0, 1)])

    def test_kink_allowed(self):
        D = chain([make_round_neck(0.5, 0, 1), make_flat_tube(0.2, 0, 2)], junction_policy="kink_allowed")
        assert list(D.offsets) == [0.0, 1.0]
        assert D.length == 3.0

    def test_periodic_both_ends(self):
        with pytest.raises(InvalidParameter):
            chain([make_flat_tube(1, 0, 1)], "periodic", "dirichlet")

    def test_periodic_wrap_checked(self):
        with pytest.raises(JunctionMismatch):
            chain([make_flat_tube(1, 0, 1), make_collar(1, "torus2", "sphere2")], "periodic", "periodic")

    @given(st.lists(st.floats(min_value=0.01, max_value=50.0), min_size=1, max_size=12))
    def test_length_is_sum(self, lengths):
        D = chain([make_line(0, L) for L in lengths])
        assert abs(D.length - math.fsum(lengths)) <= 4 * np.finfo(float).eps * D.length

    def test_handbag_regions(self):
        D = make_handbag(0.1, 3.0)
        assert D.regions() == ["Z", "X", "H", "Y"]
        x = np.linspace(0, D.length, 2001)
        assert np.all(D.weight_at(x) > 0)

    def test_disjoint_union(self):
        a = chain([make_flat_tube(1.0, 0, 1)], "periodic", "periodic")
        b = chain([make_flat_tube(0.5, 0, 1)], "periodic", "periodic")
        U = disjoint_union([a, b])
        assert U.components == (a, b)
        with pytest.raises(InvalidParameter):
            disjoint_union([])

    def test_reflection_is_involution(self):
        D = make_handbag(0.2, 2.0, 1.0)
        x = np.linspace(0, D.length, 501)
        R = D.reflected()
        assert np.allclose(R.weight_at(x), D.weight_at(D.length - x), rtol=1e-12)
        assert chain_to_spec(R.reflected()) == chain_to_spec(D)


class TestPinch:
    def tube(self):
        return chain([make_flat_tube(1.0, 0.0, 3.0)])

    def test_zero_is_identity(self):
        fam = PinchFamily(self.tube(), (0.0, 3.0))
        assert apply_pinch(fam, 0.0) is fam.base

    @pytest.mark.parametrize("p", [1.0, 2.0])
    def test_plateau_weight(self, p):
        D = apply_pinch(PinchFamily(self.tube(), (0.0, 3.0)), p)
        w = D.weight_at(np.array([1.2, 1.5, 1.8]))
        assert np.allclose(w, 4 * math.pi ** 2 * 0.5 ** p)
        assert np.all(D.curvature_at(np.array([1.5])) == 0)

    @given(st.floats(0, 20), st.floats(0, 20))
    def test_monotone_in_p(self, p, q):
        fam = PinchFamily(self.tube(), (0.0, 3.0))
        lo, hi = sorted((p, q))
        x = np.linspace(0, 3, 301)
        w_lo = apply_pinch(fam, lo).weight_at(x)
        w_hi = apply_pinch(fam, hi).weight_at(x)
        assert np.all(w_hi <= w_lo * (1 + 1e-15))
        assert np.all(w_hi > 0)

    def test_non_torus_region(self):
        D = chain([make_round_neck(0.2, 0, 1), make_collar(0.2, "sphere2", "torus2"), make_flat_tube(0.2, 0, 2)])
        with pytest.raises(UnsupportedPinch):
            PinchFamily(D, (0.5, 2.0))

    def test_negative_exponent(self):
        with pytest.raises(InvalidParameter):
            apply_pinch(PinchFamily(self.tube(), (0.0, 3.0)), -1.0)

    def test_handbag_plateau(self):
        D = make_handbag(0.1, 2.0)
        fam = handbag_pinch(D)
        a, b = fam.region
        assert b - a == pytest.approx(4.0)
        pinched = apply_pinch(fam, 3.0)
        mid = 0.5 * (a + b)
        assert pinched.weight_at(np.array([mid]))[0] == pytest.approx(fiber_volume("torus2", 0.1) / 8)


class TestSpecs:
    def test_round_trip_plain(self):
        D = neck_host(0.2, 3.0)
        spec = json.loads(json.dumps(chain_to_spec(D)))
        E = chain_from_spec(spec)
        x = np.linspace(0, D.length, 777)
        assert np.array_equal(D.weight_at(x), E.weight_at(x))
        assert chain_to_spec(E) == chain_to_spec(D)

    def test_round_trip_pinched(self):
        D = apply_pinch(handbag_pinch(make_handbag(0.05, 2.0)), 4.5)
        E = chain_from_spec(json.loads(json.dumps(chain_to_spec(D))))
        x = np.linspace(0, D.length, 999)
        assert np.allclose(D.weight_at(x), E.weight_at(x), rtol=1e-13)
        assert E.pinch == D.pinch

    def test_round_trip_assembled(self):
        D = apply_pinch(handbag_pinch(make_handbag(0.05, 2.0)), 2.0)
        whole = concatenate([D.reflected(), make_handbag(0.05, 1.0), D])
        E = chain_from_spec(json.loads(json.dumps(chain_to_spec(whole))))
        x = np.linspace(0, whole.length, 1999)
        assert np.allclose(whole.weight_at(x), E.weight_at(x), rtol=1e-12)

    def test_public_format(self):
        spec = {"segments": [{"profile": "torus2", "h": 1.0, "A": 0, "B": 3, "label": "H"}],
                "left_bc": "dirichlet", "right_bc": "dirichlet",
                "pinch": {"region": [0, 3], "p": 2}}
        D = chain_from_spec(spec)
        assert D.weight_at(np.array([1.5]))[0] == pytest.approx(math.pi ** 2)

    def test_errors(self):
        with pytest.raises(ParseError):
            chain_from_spec({})
        with pytest.raises(ParseError):
            segment_from_spec({"profile": "torus2", "h": 1})
        with pytest.raises(ParseError):
            segment_from_spec({"profile": "klein", "A": 0, "B": 1})

    def test_resize_moves_pinch(self):
        D = apply_pinch(handbag_pinch(make_handbag(0.2, 3.0, 1.0)), 2.0)
        E = resize_segment(D, 0, 2.0)
        assert E.pinch[0] == pytest.approx(D.pinch[0] + 1.0)
        x = np.linspace(0, D.length, 301)
        assert np.allclose(E.weight_at(x + 1.0), D.weight_at(x), rtol=1e-12)
        with pytest.raises(UnsupportedPinch):
            resize_segment(D, D.find("H")[1], 5.0)

    def test_chain_type(self):
        assert isinstance(make_handbag(0.1, 2.0), DomainChain)
