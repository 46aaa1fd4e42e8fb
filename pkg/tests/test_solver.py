import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bvalue.coverage import coverage, coverage_fusion, coverage_one_sided, coverage_pt
from bvalue.errors import DimensionError, DomainError
from bvalue.estimators import EstimatorPair, FusionProblem, MultiProblem
from bvalue.oracle import McConfig, mc_coverage
from bvalue.solver import (
    confidence_interval,
    half_length_fusion,
    half_length_one_sided,
    half_length_pt,
    half_length_pw,
    half_length_st,
    region_radius,
    sensitivity_curve,
)

from conftest import assert_within_mc

C = 1.959963984540054
C1 = 1.6448536269514722
FIG = EstimatorPair(1.0, 2.0, 1.0, 0.1)
MC = McConfig(n_draws=200_000, seed=5)


def mc_ok(p, se, zeta=0.05):
    assert abs(p - (1 - zeta)) <= 3 * se, (p, se)


class TestPW:
    def test_zero_bias(self):
        for g in (0.3, 10.0, 100.0):
            assert abs(half_length_pw(0.0, 0.05, g) - C) < 1e-9

    def test_increasing(self):
        assert half_length_pw(1.0, 0.05, 10.0) > half_length_pw(0.5, 0.05, 10.0) > half_length_pw(0.0, 0.05, 10.0)

    def test_folded_normal_quantile(self, oracles):
        ref = oracles["folded_quantile_a1.507557_p95"]
        assert abs(half_length_pw(0.5, 0.05, 10.0) - ref["value"]) < 2e-3


class TestPT:
    def test_zero_bias_mc(self):
        r = half_length_pt(0.0, 0.05, 10.0, 0.05)
        assert abs(coverage_pt(r.half_length_raw, 0.0, 10.0, 0.05) - 0.95) < 1e-8
        mc_ok(*mc_coverage("PT", "univariate", 0.0, FIG, r.half_length_scaled, MC))

    def test_never_rejecting_pretest(self):
        for b in (0.0, 0.5, 1.5):
            r = half_length_pt(b, 0.05, 10.0, 1e-300)
            assert abs(r.half_length_raw - half_length_pw(b, 0.05, 10.0)) < 1e-6

    def test_worst_case_against_dense_scan(self, oracles):
        ref = oracles["pt_worst_t_b2_g10"]
        r = half_length_pt(2.0, 0.05, 10.0, 0.05)
        assert abs(r.worst_case_t - ref["t"]) < 1e-3
        assert abs(r.half_length_raw - ref["L"]) < 1e-8

    def test_interior_worst_case_certified(self):
        # at gamma = 100 the worst bias for b = 0.5 is interior
        r = half_length_pt(0.5, 0.05, 100.0, 0.05)
        assert 0.0 < r.worst_case_t < 0.5
        ts = np.linspace(0, 0.5, 20001)
        assert coverage_pt(r.half_length_raw, ts, 100.0, 0.05).min() >= 0.95 - 1e-7


class TestST:
    def test_zero_bias_never_rejecting(self):
        assert abs(half_length_st(0.0, 0.05, 10.0, 1e-300).half_length_raw - C) < 1e-6

    def test_nondecreasing_in_b(self):
        Ls = [half_length_st(b, 0.05, 10.0, 0.05).half_length_raw for b in np.linspace(0, 5, 21)]
        assert np.all(np.diff(Ls) >= -1e-9)

    def test_mc_at_boundary(self):
        r = half_length_st(1.0, 0.05, 10.0, 0.05)
        assert r.worst_case_t == 1.0
        mc_ok(*mc_coverage("ST", "univariate", 1.0, FIG, r.half_length_scaled, MC))


class TestOneSided:
    def test_pw_closed_form(self):
        r = half_length_one_sided("PW", 0.5, 0.05, 10.0)
        assert abs(r.half_length_raw - 3.152410) < 1e-6
        assert abs(r.half_length_raw - (C1 + 10 * 0.5 / math.sqrt(11))) < 1e-12

    def test_zero_bias(self):
        for kind in ("PW", "PT", "ST"):
            assert abs(half_length_one_sided(kind, 0.0, 0.05, 10.0, 1e-300).half_length_raw - C1) < 1e-6

    def test_st_mc(self):
        r = half_length_one_sided("ST", 1.0, 0.05, 10.0, 0.05, "lower")
        mc_ok(*mc_coverage("ST", "univariate", 1.0, FIG, r.half_length_scaled, MC, side="lower"))

    def test_upper_mirrors_lower(self):
        for kind in ("PW", "PT", "ST"):
            lo = half_length_one_sided(kind, 0.7, 0.05, 10.0, 0.05, "lower")
            up = half_length_one_sided(kind, 0.7, 0.05, 10.0, 0.05, "upper")
            assert abs(lo.half_length_raw - up.half_length_raw) < 1e-9
            assert abs(lo.worst_case_t + up.worst_case_t) < 1e-6 or lo.worst_case_t == up.worst_case_t == 0.0

    def test_pt_worst_case_certified(self):
        r = half_length_one_sided("PT", 1.0, 0.05, 10.0, 0.05, "lower")
        ts = np.linspace(-1, 1, 4001)
        assert coverage_one_sided("PT", r.half_length_raw, ts, 10.0, 0.05).min() >= 0.95 - 1e-7


@pytest.mark.parametrize("kind", ["PW", "PT", "ST"])
def test_certified_worst_case(kind):
    """Analytic coverage at the solved length equals 1 - zeta at the reported
    worst case and is no lower anywhere in the bias range."""
    for g, b in [(10.0, 0.5), (100.0, 2.0), (0.7, 1.0)]:
        r = confidence_interval(kind, EstimatorPair(0.0, 0.0, 1.0, 1 / g), b)
        assert abs(coverage(kind, r.half_length_raw, r.worst_case_t, g) - 0.95) < 1e-6
        ts = np.linspace(-b, b, 2001)
        assert coverage(kind, r.half_length_raw, ts, g).min() >= 0.95 - 1e-6


@settings(max_examples=10)
@given(st.floats(0.3, 150.0), st.floats(0.0, 3.0), st.floats(0.01, 0.2))
def test_monotone_in_zeta(g, b, zeta):
    for kind in ("PW", "ST"):
        wide = confidence_interval(kind, EstimatorPair(0, 0, 1, 1 / g), b, zeta / 2).half_length_raw
        narrow = confidence_interval(kind, EstimatorPair(0, 0, 1, 1 / g), b, zeta).half_length_raw
        assert wide >= narrow - 1e-9


def test_pw_over_st_ratio_grows():
    ratios = []
    for k in range(4):
        b = 10.0**k
        ratios.append(half_length_pw(b, 0.05, 10.0) / half_length_st(b, 0.05, 10.0, 0.05).half_length_raw)
    assert np.all(np.diff(ratios) > 0)


class TestCurve:
    def test_grid_zero_matches_point_solvers(self):
        for kind in ("PW", "ST"):
            row = sensitivity_curve(kind, "two_sided", [0.0], FIG, include_unbiased=False)[0]
            single = confidence_interval(kind, FIG, 0.0)
            assert (row.lower, row.upper) == (single.lower, single.upper)

    def test_shapes(self):
        grid = [0.0, 0.5, 1.0, 2.0, 5.0, 100.0, 1000.0]
        pw = sensitivity_curve("PW", "two_sided", grid, FIG, include_unbiased=False)
        stc = sensitivity_curve("ST", "two_sided", grid, FIG)
        assert np.all(np.diff([r.half_length_raw for r in pw]) > 0)
        L_st = [r.half_length_raw for r in stc[: len(grid)]]
        assert np.all(np.diff(L_st) >= -1e-9)
        assert abs(L_st[-1] - L_st[-2]) < 1e-3
        unb = stc[len(grid):]
        assert all(r.kind == "unbiased" and r.lower == unb[0].lower for r in unb)

    def test_reference_pair_st_shorter_than_pt(self):
        pt = confidence_interval("PT", FIG, 0.0)
        stv = confidence_interval("ST", FIG, 0.0)
        assert stv.half_length_scaled < pt.half_length_scaled

    def test_unsorted_grid(self):
        with pytest.raises(DomainError):
            sensitivity_curve("PW", "two_sided", [1.0, 0.5], FIG)


class TestRegion:
    def test_zero_bias_pw(self):
        p = MultiProblem(np.zeros(2), np.zeros(2), np.eye(2), 0.1 * np.eye(2))
        assert abs(region_radius("PW", [0.0, 0.0], 0.05, p).M - 5.991465) < 1e-4

    @pytest.mark.parametrize("kind", ["PW", "PT", "ST"])
    def test_d1_reduction(self, kind):
        p = MultiProblem([0.0], [0.0], [[1.0]], [[0.1]], q=C**2, h_star=lambda r: np.sqrt(C**2 / r))
        for b in (0.0, 0.5, 2.0):
            r = region_radius(kind, [b], 0.05, p)
            L = confidence_interval(kind, EstimatorPair(0, 0, 1, 0.1), b).half_length_raw
            assert abs(math.sqrt(r.M) - L) < 1e-6

    def test_st_mc_at_vertex(self):
        p = MultiProblem(np.zeros(2), np.zeros(2), np.eye(2), 0.1 * np.eye(2))
        r = region_radius("ST", [0.5, 0.5], 0.05, p)
        assert np.allclose(np.abs(r.worst_case_t), 0.5)
        mc_ok(*mc_coverage("ST", "multivariate", p.scale_root @ r.worst_case_t, p, r, MC))

    def test_pt_mc_at_worst(self):
        p = MultiProblem(np.zeros(2), np.zeros(2), np.eye(2), 0.1 * np.eye(2))
        r = region_radius("PT", [0.5, 0.5], 0.05, p)
        mc_ok(*mc_coverage("PT", "multivariate", p.scale_root @ r.worst_case_t, p, r, MC))

    def test_dimension_limit(self):
        p = MultiProblem(np.zeros(9), np.zeros(9), np.eye(9), np.eye(9))
        with pytest.raises(DimensionError):
            region_radius("PW", np.zeros(9), 0.05, p)

    def test_monotone_in_b(self):
        p = MultiProblem(np.zeros(2), np.zeros(2), np.diag([1.0, 2.0]), np.diag([0.1, 0.5]))
        Ms = [region_radius("ST", [s, 0.5 * s], 0.05, p).M for s in (0.0, 0.5, 1.0, 2.0)]
        assert np.all(np.diff(Ms) > 0)


class TestFusion:
    def test_zero_bias_pw(self):
        fp = FusionProblem(0.0, 1.0, [(0.0, 0.1), (0.0, 0.2)])
        assert abs(half_length_fusion("PW", [0.0, 0.0], 0.05, fp).half_length_raw - C) < 1e-9

    @pytest.mark.parametrize("kind", ["PW", "PT", "ST"])
    def test_k1_reduction(self, kind):
        for g in (0.5, 10.0):
            fp = FusionProblem(0.0, 1.0, [(0.0, 1 / g)])
            for b in (0.0, 0.5, 2.0):
                L = half_length_fusion(kind, [b], 0.05, fp).half_length_raw
                ref = confidence_interval(kind, EstimatorPair(0, 0, 1, 1 / g), b).half_length_raw
                assert abs(L - ref) < 1e-6

    def test_st_mc_at_vertex(self):
        fp = FusionProblem(0.0, 1.0, [(0.0, 0.1), (0.0, 0.2)])
        r = half_length_fusion("ST", [0.5, 1.0], 0.05, fp)
        assert np.allclose(r.worst_case_t, [0.5, 1.0])
        mc_ok(*mc_coverage("ST", "fusion", r.worst_case_t, fp, r, MC))

    def test_pt_certified(self):
        fp = FusionProblem(0.0, 1.0, [(0.0, 0.1), (0.0, 0.2)])
        b = np.array([0.5, 1.0])
        r = half_length_fusion("PT", b, 0.05, fp)
        g1, g2 = np.meshgrid(np.linspace(-0.5, 0.5, 11), np.linspace(-1, 1, 11))
        T = np.column_stack([g1.ravel(), g2.ravel()])
        assert coverage_fusion("PT", r.half_length_raw, T, fp).min() >= 0.95 - 2e-6
        mc_ok(*mc_coverage("PT", "fusion", r.worst_case_t, fp, r, MC))
