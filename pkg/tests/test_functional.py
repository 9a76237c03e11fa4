import math

import mpmath
import numpy as np
import pytest
import sympy as sp
from hypothesis import given
from hypothesis import strategies as st

from lslab.errors import InvalidField, InvalidParameter, NormalizationError, ShapeError, SignError
from lslab.functional import (
    el_residual,
    evaluate_log_sobolev,
    evaluate_w_entropy,
    functional_gradient,
    l2_norm_sq,
)
from lslab.geometry import (
    apply_pinch,
    chain,
    disjoint_union,
    handbag_pinch,
    make_flat_tube,
    make_handbag,
    make_line,
    make_round_neck,
    neck_host,
)
from lslab.grid import build_grid, sample
from lslab.verification import TUBE_DIRICHLET_EXACT, tube_entropy_exact, tube_test_function

EUCLID = 1.0 + 0.5 * math.log(4 * math.pi)


def periodic_tube(h=1.0, length=1.0):
    return chain([make_flat_tube(h, 0.0, length)], "periodic", "periodic")


def gaussian(x):
    return (4 * math.pi) ** -0.25 * np.exp(-((x - 10.0) ** 2) / 8.0)


DOMAIN_BUILDERS = [
    lambda: chain([make_line(0.0, 2.0)]),
    lambda: chain([make_round_neck(0.5, 0.0, 2.0)], "neumann", "dirichlet"),
    lambda: periodic_tube(0.7, 1.5),
    lambda: neck_host(0.3, 1.0),
    lambda: apply_pinch(handbag_pinch(make_handbag(0.2, 0.5)), 2.5),
    lambda: disjoint_union([chain([make_line(0.0, 1.0)]), periodic_tube(0.4, 1.0)]),
]


def random_field(grid, r, low=0.2):
    v = low + r.random(grid.size)
    v[grid.fixed] = 0.0
    return v


class TestOracles:
    """Closed forms of the collapsing-tube test function, derived independently."""

    def test_symbolic_integrals(self):
        x, h = sp.symbols("x h", positive=True)
        top = sp.sqrt(3) / (sp.sqrt(8) * sp.pi * h)
        w = 4 * sp.pi ** 2 * h ** 2
        pieces = [(4 * x * top, (x, 0, sp.Rational(1, 4))), (top, (x, sp.Rational(1, 4), sp.Rational(3, 4))),
                  (4 * (1 - x) * top, (x, sp.Rational(3, 4), 1))]
        norm = sum(sp.integrate(f ** 2 * w, rng) for f, rng in pieces)
        dirichlet = sum(sp.integrate(4 * sp.diff(f, x) ** 2 * w, rng) for f, rng in pieces)
        entropy = sum(sp.integrate(-f ** 2 * sp.log(f ** 2) * w, rng) for f, rng in pieces)
        assert sp.simplify(norm) == 1
        assert sp.simplify(dirichlet) == 48
        for hv in (0.1, 0.01, 1e-3):
            assert float(entropy.subs(h, hv)) == pytest.approx(tube_entropy_exact(hv), rel=1e-12)
        # coefficient of ln h^2 in the entropy part is 1
        coeff = sp.simplify(sp.diff(entropy, h) * h / 2)
        assert coeff == 1

    @pytest.mark.parametrize("h", [0.1, 0.01, 0.001])
    def test_high_precision_quadrature(self, h):
        mpmath.mp.dps = 30
        top = mpmath.sqrt(3) / (mpmath.sqrt(8) * mpmath.pi * h)
        w = 4 * mpmath.pi ** 2 * h * h

        def v(x):
            return top * min(4 * x, 1, 4 * (1 - x))

        pts = [0, 0.25, 0.75, 1]
        ent = mpmath.quad(lambda x: -v(x) ** 2 * mpmath.log(v(x) ** 2) * w if x > 0 and x < 1 else 0, pts)
        assert float(ent) == pytest.approx(tube_entropy_exact(h), rel=1e-12)
        assert float(mpmath.quad(lambda x: v(x) ** 2 * w, pts)) == pytest.approx(1.0, rel=1e-20)

    @pytest.mark.parametrize("h", [0.1, 0.01, 0.001])
    def test_discrete_matches_closed_form(self, h):
        D = chain([make_flat_tube(h, 0.0, 1.0)])
        v = sample(build_grid(D, 1e-4), tube_test_function(h))
        assert l2_norm_sq(v, D) == pytest.approx(1.0, abs=1e-6)
        parts = evaluate_log_sobolev(v, D, tol=1e-6)
        assert parts.dirichlet_part == pytest.approx(TUBE_DIRICHLET_EXACT, abs=1e-3)
        assert parts.entropy_part == pytest.approx(tube_entropy_exact(h), abs=1e-3)


class TestNorm:
    def test_zero(self):
        D = neck_host(0.3, 1.0)
        assert l2_norm_sq(sample(build_grid(D, 0.01), lambda x: 0 * x), D) == 0.0

    def test_constant_on_tube(self):
        D = periodic_tube()
        v = sample(build_grid(D, 0.01), lambda x: 0 * x + 1 / (2 * math.pi))
        assert l2_norm_sq(v, D) == pytest.approx(1.0, rel=1e-14)

    def test_mismatch(self):
        v = sample(build_grid(periodic_tube(), 0.01), lambda x: 0 * x + 1)
        with pytest.raises(ShapeError):
            l2_norm_sq(v, periodic_tube(0.5))


class TestEvaluate:
    def test_constant_on_tube(self):
        D = periodic_tube()
        v = sample(build_grid(D, 0.01), lambda x: 0 * x + 1 / (2 * math.pi))
        val = evaluate_log_sobolev(v, D)
        assert val.total == pytest.approx(math.log(4 * math.pi ** 2), rel=1e-13)
        assert val.dirichlet_part == 0.0

    def test_parts_add_up(self, rng):
        D = neck_host(0.3, 2.0)
        g = build_grid(D, 0.01)
        v = sample(g, lambda x: 0 * x).with_values(random_field(g, rng)).normalized()
        val = evaluate_log_sobolev(v, D)
        assert val.total == pytest.approx(val.dirichlet_part + val.curvature_part + val.entropy_part, rel=1e-14)

    def test_guards(self):
        D = periodic_tube()
        g = build_grid(D, 0.01)
        with pytest.raises(NormalizationError):
            evaluate_log_sobolev(sample(g, lambda x: 0 * x + 1.0), D)
        with pytest.raises(InvalidField):
            evaluate_log_sobolev(sample(g, lambda x: np.where(x > 0.5, np.nan, 1.0)), D)

    @given(st.integers(0, 2**32 - 1))
    def test_absolute_value_invariance(self, seed):
        r = np.random.default_rng(seed)
        D = chain([make_round_neck(0.5, 0.0, 2.0)])
        g = build_grid(D, 0.02)
        v = sample(g, lambda x: 0 * x).with_values(r.standard_normal(g.size)).normalized()
        v = v.with_values(np.where(g.fixed, 0.0, v.values)).normalized()
        a = evaluate_log_sobolev(v, D).total
        b = evaluate_log_sobolev(abs(v), D).total
        assert a >= b - 1e-12
        assert not math.isnan(b)

    def test_second_order(self):
        D = neck_host(0.4, 1.5)
        L = D.length

        def field(x):
            return np.sin(math.pi * x / L) * (1 + 0.3 * np.cos(3 * x))

        vals = []
        for dx in (0.04, 0.02, 0.01, 0.005):
            v = sample(build_grid(D, dx), field)
            n = v.norm_sq()
            parts = evaluate_log_sobolev(v.normalized(), D)
            vals.append((n, parts.dirichlet_part, parts.curvature_part, parts.entropy_part))
        vals = np.array(vals)
        e = np.abs(np.diff(vals, axis=0))
        order = np.log2(e[:-1] / e[1:])
        assert np.all(order > 1.9)


class TestGradient:
    @given(st.integers(0, len(DOMAIN_BUILDERS) - 1), st.integers(0, 2**32 - 1))
    def test_finite_differences(self, which, seed):
        D = DOMAIN_BUILDERS[which]()
        g = build_grid(D, 0.02)
        r = np.random.default_rng(seed)
        v = sample(g, lambda *a: 0 * a[0]).with_values(random_field(g, r))
        d = r.standard_normal(g.size)
        d[g.fixed] = 0.0
        grad = functional_gradient(v, D)
        analytic = float(np.dot(g.q * grad.values, d))
        eps = 1e-5

        def f(t):
            return evaluate_log_sobolev(v.with_values(v.values + t * d), D, tol=math.inf).total

        numeric = (f(eps) - f(-eps)) / (2 * eps)
        assert abs(analytic - numeric) <= 1e-5 * max(1.0, abs(analytic))

    def test_gaussian_collinear(self):
        D = chain([make_line(0.0, 20.0)])
        g = build_grid(D, 1e-3)
        v = sample(g, gaussian)
        grad = functional_gradient(v, D).values
        inner = (g.x > 4) & (g.x < 16)
        ratio = grad[inner] / v.values[inner]
        c = (4 * math.pi) ** -0.25
        assert np.allclose(ratio, -4 * math.log(c), atol=1e-4)

    def test_constant_on_tube(self):
        D = chain([make_round_neck(0.5, 0.0, 1.0)], "periodic", "periodic")
        c = 0.3
        v = sample(build_grid(D, 0.01), lambda x: 0 * x + c)
        grad = functional_gradient(v, D).values
        R = 4.0
        assert np.allclose(grad, 2 * R * c - 2 * c * math.log(c * c) - 2 * c, rtol=1e-12)


class TestResidual:
    def test_gaussian(self):
        D = chain([make_line(0.0, 20.0)])
        # raw samples: the closed form is about 2e-6 at the ends, not 0
        v = sample(build_grid(D, 1e-3), gaussian, enforce_bc=False)
        assert el_residual(v, EUCLID, D) <= 1e-4

    def test_zero_field(self):
        D = neck_host(0.3, 1.0)
        assert el_residual(sample(build_grid(D, 0.01), lambda x: 0 * x), 7.0, D) == 0.0

    def test_sign(self):
        D = chain([make_line(0.0, 1.0)])
        with pytest.raises(SignError):
            el_residual(sample(build_grid(D, 0.01), lambda x: x - 0.5), 1.0, D)


class TestWEntropy:
    @given(st.integers(0, len(DOMAIN_BUILDERS) - 1), st.integers(0, 2**32 - 1))
    def test_unit_tau_identity(self, which, seed):
        D = DOMAIN_BUILDERS[which]()
        g = build_grid(D, 0.02)
        v = sample(g, lambda *a: 0 * a[0]).with_values(random_field(g, np.random.default_rng(seed))).normalized()
        W = evaluate_w_entropy(v, D, tau=1.0, n=3)
        L = evaluate_log_sobolev(v, D).total
        assert W == pytest.approx(L - 1.5 * math.log(4 * math.pi) - 3, abs=1e-12)

    @pytest.mark.parametrize("tau", [0.5, 1.0, 2.0])
    def test_scaling(self, rng, tau):
        c = 4.0
        D = neck_host(0.3, 1.5)
        Dc = D.scaled(c)
        g = build_grid(D, 0.01)
        gc = build_grid(Dc, 0.01 * math.sqrt(c))
        assert gc.size == g.size
        v = sample(g, lambda x: 0 * x).with_values(random_field(g, rng)).normalized()
        vc = sample(gc, lambda x: 0 * x).with_values(v.values * c ** -0.75)
        assert evaluate_w_entropy(vc, Dc, tau=c * tau) == pytest.approx(evaluate_w_entropy(v, D, tau=tau), abs=1e-6)

    def test_guards(self):
        D = periodic_tube()
        g = build_grid(D, 0.01)
        with pytest.raises(NormalizationError):
            evaluate_w_entropy(sample(g, lambda x: 0 * x), D)
        with pytest.raises(InvalidParameter):
            evaluate_w_entropy(sample(g, lambda x: 0 * x + 1 / (2 * math.pi)), D, tau=0.0)
