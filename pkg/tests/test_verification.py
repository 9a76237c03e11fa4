import csv
import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lslab.errors import (
    InsufficientData,
    InvalidCutoff,
    InvalidParameter,
    NormalizationError,
    OutOfRange,
    StaleResult,
    UnderflowRegion,
    UnknownSegment,
)
from lslab.geometry import (
    chain,
    handbag_pinch,
    make_flat_tube,
    make_handbag,
    make_line,
    make_round_neck,
    neck_host,
)
from lslab.grid import build_grid, sample
from lslab.solver import SolverOptions, SpectralResult, minimize_log_sobolev
from lslab.verification import (
    LEMMA_IDS,
    LemmaReport,
    check_cutoff_comparison,
    check_max_lower_bound,
    check_mean_value,
    check_neck_end_decay,
    check_neck_extension,
    check_neck_middle_decay,
    check_pinch_continuity,
    check_tube_collapse,
    envelope_fit,
    fit_gaussian_decay,
    mean_value_ratio,
    mean_value_spread,
    ramp_cutoff,
    read_reports,
    recheck,
    write_reports,
)

OPTS = SolverOptions(dx=0.01, restarts=4)


@pytest.fixture(scope="module")
def line():
    D = chain([make_line(-10.0, 10.0)])
    return D, minimize_log_sobolev(D, SolverOptions(dx=0.01))


def fake_result(field, lam=0.0):
    return SpectralResult(lam=lam, extremal=field, residual=0.0, iterations=0, converged=True, multi_start_spread=0.0)


def periodic_tube(h=1.0, length=6.0):
    return chain([make_flat_tube(h, 0.0, length)], "periodic", "periodic")


class TestMaxBound:
    def test_line(self, line):
        D, res = line
        r = check_max_lower_bound(res, D)
        assert r.passed
        assert r.measured["sup_v"] == pytest.approx((4 * math.pi) ** -0.25, rel=1e-3)
        assert r.measured["bound"] == pytest.approx(math.exp(-0.5 * 2.26551), rel=1e-2)

    def test_round_neck(self):
        D = chain([make_round_neck(1.0, 0.0, 10.0)])
        r = check_max_lower_bound(minimize_log_sobolev(D, OPTS), D)
        assert r.passed and r.margin > 0

    def test_guards(self, line):
        D, res = line
        with pytest.raises(NormalizationError):
            check_max_lower_bound(replace(res, extremal=res.extremal.with_values(0.1 * res.extremal.values)), D)
        with pytest.raises(StaleResult):
            check_max_lower_bound(replace(res, converged=False), D)


class TestMeanValue:
    def test_constant_on_tube(self):
        h = 0.5
        D = periodic_tube(h)
        v = sample(build_grid(D, 0.01), lambda x: 0 * x + 0.7)
        vol = 4.0 * 4 * math.pi ** 2 * h * h
        assert mean_value_ratio(v, 3.0) == pytest.approx(1 / vol, rel=1e-12)

    def test_gaussian_stable(self, line):
        D, res = line
        r = check_mean_value(res, D, 10.0)
        assert r.passed and math.isfinite(r.measured["C_obs"])

    def test_clipped_ball(self, line):
        D, res = line
        with pytest.raises(OutOfRange):
            check_mean_value(res, D, 1.0)

    def test_spread_reported(self):
        r = mean_value_spread((0.1, 0.2), l=2.0, opts=OPTS)
        assert r.lemma == "2.1-h" and r.passed
        assert r.measured["spread"] >= 1.0


class TestGaussianDecay:
    def test_line_rate(self, line):
        D, res = line
        fit = fit_gaussian_decay(res, D, 10.0)
        assert fit.rate == pytest.approx(1 / 8, rel=0.05)
        assert fit.report.passed

    def test_round_neck(self):
        D = chain([make_round_neck(0.2, -10.0, 10.0)])
        res = minimize_log_sobolev(D, OPTS)
        fit = fit_gaussian_decay(res, D, 10.0)
        assert fit.rate > 0 and fit.r_squared >= 0.99

    def test_constant_fails(self):
        D = periodic_tube()
        v = sample(build_grid(D, 0.01), lambda x: 0 * x + 0.1)
        fit = fit_gaussian_decay(fake_result(v), D, 0.0, r0=0.5, width=2.0)
        assert fit.rate == pytest.approx(0.0, abs=1e-12)
        assert not fit.report.passed

    def test_underflow(self):
        D = chain([make_line(0.0, 20.0)])
        v = sample(build_grid(D, 0.01), lambda x: np.where(np.abs(x - 10) < 1.5, 1.0, 0.0))
        with pytest.raises(UnderflowRegion):
            fit_gaussian_decay(fake_result(v), D, 10.0)

    def test_too_short(self, line):
        D, res = line
        with pytest.raises(OutOfRange):
            fit_gaussian_decay(res, D, 10.0, r0=8.0)


class TestNeckDecay:
    def test_middle(self):
        reports = check_neck_middle_decay(0.2, [2.0, 3.0, 4.0, 5.0], OPTS)
        assert len(reports) == 4 and all(r.passed for r in reports)
        values = [r.measured["value"] for r in reports]
        assert all(b < a for a, b in zip(values, values[1:]))

    def test_end(self):
        reports = check_neck_end_decay(0.2, [2.0, 3.0, 4.0], OPTS)
        assert all(r.passed for r in reports)

    def test_guards(self):
        with pytest.raises(InvalidParameter):
            check_neck_middle_decay(0.3, [2, 3, 4])
        with pytest.raises(InsufficientData):
            check_neck_middle_decay(0.2, [2, 3])
        with pytest.raises(InvalidParameter):
            check_neck_end_decay(0.2, [1, 3, 4])


class TestCutoff:
    @pytest.fixture(scope="class")
    @staticmethod
    def host():
        F = neck_host(0.5, 3.0)
        return F, minimize_log_sobolev(F, OPTS)

    def test_equality_case(self, host):
        F, res = host
        one = res.extremal.with_values(np.ones(res.extremal.grid.size))
        r = check_cutoff_comparison(res, F, one, opts=OPTS)
        assert r.passed and abs(r.measured["slack"]) <= 1e-6

    def test_ramp(self, host):
        F, res = host
        E = chain(F.segments[1:-1])
        eta = ramp_cutoff(res.extremal.grid, 1.0, F.length - 1.0)
        r = check_cutoff_comparison(res, E, eta, offset=1.0, opts=OPTS)
        assert r.passed and r.measured["slack"] >= 0

    def test_bad_cutoff(self, host):
        F, res = host
        big = res.extremal.with_values(np.full(res.extremal.grid.size, 1.5))
        with pytest.raises(InvalidCutoff):
            check_cutoff_comparison(res, F, big)
        E = chain(F.segments[1:-1])
        with pytest.raises(InvalidCutoff):
            check_cutoff_comparison(res, E, res.extremal.with_values(np.ones(res.extremal.grid.size)), offset=1.0)


class TestExtension:
    def test_plain_host(self):
        reports = check_neck_extension(neck_host(0.35, 1.0), "N", [1.0, 2.0, 3.0, 4.0, 5.0], OPTS)
        assert all(r.passed for r in reports)
        assert all(r.measured["difference"] >= -r.measured["noise"] for r in reports)
        assert all(r.measured["envelope"] >= r.measured["difference"] for r in reports)

    def test_unknown_label(self):
        with pytest.raises(UnknownSegment):
            check_neck_extension(neck_host(0.35, 1.0), "Q", [1, 2, 3])


class TestContinuity:
    @pytest.fixture(scope="class")
    @staticmethod
    def family():
        return handbag_pinch(make_handbag(0.1, 2.0))

    def test_zero_delta(self, family):
        r = check_pinch_continuity(family, 1.0, [0.5, 0.0], OPTS)
        assert r.measured["differences"][-1] == 0.0
        assert r.passed

    def test_guards(self, family):
        with pytest.raises(InvalidParameter):
            check_pinch_continuity(family, -1.0, [0.1])
        with pytest.raises(InvalidParameter):
            check_pinch_continuity(family, 1.0, [0.1, 0.2])


class TestTube:
    def test_single_scale(self):
        reports = check_tube_collapse([0.05], test_dx=1e-4)
        assert [r.lemma for r in reports] == ["3.6"]
        assert reports[0].passed

    def test_drop(self):
        reports = check_tube_collapse([0.2, 0.02], test_dx=1e-4)
        drop = reports[-1]
        assert drop.lemma == "3.6-h" and drop.passed
        assert drop.measured["drops"][0] == pytest.approx(math.log(100), abs=0.05)
        assert drop.measured["log_h2_coefficient"] == pytest.approx(1.0, abs=1e-9)


class TestReports:
    def test_round_trip(self, tmp_path, line):
        D, res = line
        reports = [check_max_lower_bound(res, D), fit_gaussian_decay(res, D, 10.0).report]
        write_reports(reports, tmp_path / "r.jsonl", tmp_path / "r.csv")
        back = read_reports(tmp_path / "r.jsonl")
        assert [b.to_dict() for b in back] == [r.to_dict() for r in reports]
        for b in back:
            assert recheck(b) == (b.passed, b.margin)
        rows = list(csv.reader(open(tmp_path / "r.csv")))
        assert rows[0] == ["lemma", "params", "pass", "margin"]
        assert len(rows) == 3

    def test_ids(self):
        assert "2.2" in LEMMA_IDS and "3.6-h" in LEMMA_IDS

    @given(st.floats(-3, 3), st.floats(-1, 1))
    def test_margin_recomputable(self, sup, shift):
        m = {"sup_v": abs(sup), "bound": abs(sup) + shift, "inf_R": 0.0, "lambda": 1.0}
        from lslab.verification import _report
        r = LemmaReport.from_json(_report("2.2", {}, m).to_json())
        assert recheck(r) == (r.passed, r.margin)


@given(st.floats(0.05, 3.0), st.floats(-5, 5), st.integers(0, 2**32 - 1))
def test_envelope_dominates(rate, log_amp, seed):
    r = np.random.default_rng(seed)
    t = np.sort(r.uniform(0, 10, 12))
    vals = np.exp(log_amp - rate * t + 0.1 * r.standard_normal(12))
    fit = envelope_fit(t, vals)
    assert np.all(fit.envelope(t) >= vals * (1 - 1e-12))
    assert 0 <= fit.r_squared <= 1
