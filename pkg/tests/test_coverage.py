import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bvalue.coverage import (
    coverage,
    coverage_fusion,
    coverage_limit,
    coverage_multivariate,
    coverage_one_sided,
    coverage_pt,
    coverage_pw,
    coverage_st,
)
from bvalue.errors import DimensionError
from bvalue.estimators import EstimatorPair, FusionProblem, MultiProblem
from bvalue.oracle import McConfig, mc_coverage

from conftest import assert_within_mc

C = 1.959963984540054
KINDS = ("PW", "PT", "ST")

gammas = st.floats(0.2, 200.0)
alphas = st.floats(0.01, 0.5)
lengths = st.floats(0.1, 8.0)


class TestPW:
    def test_examples(self):
        assert abs(coverage_pw(C, 0.0, 10.0) - 0.95) < 1e-12
        assert coverage_pw(0.0, 1.3, 10.0) == 0.0

    def test_against_mc(self, oracles):
        assert_within_mc(float(coverage_pw(2.5, 0.5, 10.0)), oracles["coverage_pw_L2.5_t0.5_g10"])


class TestPT:
    def test_near_useless_pretest_against_mc(self, oracles):
        assert_within_mc(float(coverage_pt(2.0, 0.0, 10.0, 0.99)), oracles["coverage_pt_L2_t0_g10_a0.99"])

    def test_total_mass(self):
        assert abs(coverage_pt(50.0, np.array([0.0, 1.0, 5.0]), 10.0, 0.05) - 1.0).max() < 1e-9

    def test_never_rejecting_pretest_is_pw(self):
        t = np.linspace(-3, 3, 25)
        assert np.max(np.abs(coverage_pt(2.2, t, 10.0, 1e-300) - coverage_pw(2.2, t, 10.0))) < 1e-9


class TestST:
    def test_total_mass(self):
        assert abs(coverage_st(50.0, np.array([0.0, 1.0, 5.0]), 10.0, 0.05) - 1.0).max() < 1e-9

    def test_against_mixture_mc(self, oracles):
        assert_within_mc(float(coverage_st(2.0, 1.0, 10.0, 0.05)), oracles["coverage_st_L2_t1_g10_a0.05"])

    def test_nonincreasing_on_grid(self):
        v = coverage_st(2.5, np.linspace(0, 5, 101), 10.0, 0.05)
        assert np.all(np.diff(v) <= 1e-12)

    @pytest.mark.parametrize("gamma", [0.5, 10.0, 100.0])
    def test_limit(self, gamma):
        for kind in ("PT", "ST"):
            far = coverage(kind, 3.0, 1e3, gamma, 0.05)
            assert abs(far - coverage_limit(kind, 3.0, gamma, 0.05)) < 1e-12


class TestOneSided:
    def test_pw_closed_form(self):
        L = 1.6448536269514722 + 10 * 0.5 / math.sqrt(11)
        assert abs(L - 3.152410) < 1e-6
        assert abs(coverage_one_sided("PW", L, 0.5, 10.0) - 0.95) < 1e-14

    def test_large_length(self):
        for kind in KINDS:
            assert abs(coverage_one_sided(kind, 60.0, 1.0, 10.0, 0.05) - 1.0) < 1e-9

    def test_st_against_mixture_mc(self, oracles):
        v = float(coverage_one_sided("ST", 2.0, 1.0, 10.0, 0.05, "lower"))
        assert_within_mc(v, oracles["coverage_st_lower_L2_t1_g10_a0.05"])

    @given(lengths, st.floats(-4, 4), gammas, alphas)
    def test_upper_is_reflected_lower(self, L, t, g, a):
        for kind in KINDS:
            up = coverage_one_sided(kind, L, t, g, a, "upper")
            lo = coverage_one_sided(kind, L, -t, g, a, "lower")
            assert abs(up - lo) < 1e-14


@given(lengths, gammas, alphas)
def test_symmetry_in_bias(L, g, a):
    t = np.linspace(0, 5, 21)
    for fn in (coverage_pt, coverage_st):
        assert np.max(np.abs(fn(L, t, g, a) - fn(L, -t, g, a))) < 1e-10


@given(st.floats(-4, 4), gammas, alphas)
def test_nondecreasing_in_length(t, g, a):
    Ls = np.linspace(0, 8, 41)
    for kind in KINDS:
        v = coverage(kind, Ls, t, g, a)
        assert np.all(np.diff(v) >= -1e-10)


@given(lengths, gammas, alphas)
def test_st_nonincreasing_in_bias(L, g, a):
    v = coverage_st(L, np.linspace(0, 5, 51), g, a)
    assert np.all(np.diff(v) <= 1e-10)


def test_analytic_matches_mixture_simulation():
    rng = np.random.default_rng(2024)
    cfg = McConfig(n_draws=200_000, seed=11)
    for _ in range(20):
        kind = str(rng.choice(KINDS))
        g = float(np.exp(rng.uniform(np.log(0.5), np.log(100))))
        a = float(rng.uniform(0.01, 0.3))
        L = float(rng.uniform(0.5, 5.0))
        t = float(rng.uniform(-3, 3))
        pair = EstimatorPair(0.0, 0.0, 1.0, 1.0 / g)
        exact = float(coverage(kind, L, t, g, a))
        p, se = mc_coverage(kind, "univariate", t, pair, L * pair.scale, cfg, method="mixture", alpha=a)
        assert abs(p - exact) < 4 * se, (kind, g, a, L, t, p, exact, se)


# ---------------------------------------------------------------------------
# Vector setting


class TestMultivariate:
    @pytest.mark.parametrize("kind", KINDS)
    def test_d1_reduction(self, kind):
        g, a = 10.0, 0.05
        p = MultiProblem([0.0], [0.0], [[1.0]], [[1 / g]], q=C**2, h_star=lambda r: np.sqrt(C**2 / r))
        for L, t in [(1.5, 0.0), (2.5, 0.7), (3.0, 2.0), (4.0, -1.2)]:
            v = coverage_multivariate(kind, L**2, [t], p)
            assert abs(v - coverage(kind, L, t, g, a)) < 1e-6

    def test_large_radius(self):
        p = MultiProblem(np.zeros(2), np.zeros(2), np.eye(2), 0.1 * np.eye(2))
        for kind in KINDS:
            assert abs(coverage_multivariate(kind, 1e4, [1.0, 0.5], p) - 1.0) < 1e-6

    def test_st_against_mc(self, oracles):
        ref = oracles["coverage_multi_st_d2"]
        p = MultiProblem(np.zeros(2), np.zeros(2), np.diag(ref["Sigma0"]), np.diag(ref["Sigma1"]), q=ref["q"])
        assert_within_mc(coverage_multivariate("ST", ref["M"], ref["t"], p), ref)


class TestFusion:
    @pytest.mark.parametrize("kind", KINDS)
    def test_k1_reduction(self, kind):
        for g in (0.5, 10.0, 100.0):
            fp = FusionProblem(0.0, 1.0, [(0.0, 1 / g)])
            for L, t in [(1.5, 0.0), (2.5, 0.7), (3.0, 2.0), (4.0, -1.2)]:
                assert abs(coverage_fusion(kind, L, [t], fp) - coverage(kind, L, t, g, 0.05)) < 1e-6

    def test_large_length(self):
        fp = FusionProblem(0.0, 1.0, [(0.0, 0.1), (0.0, 0.2)])
        for kind in KINDS:
            assert abs(coverage_fusion(kind, 50.0, [0.5, 1.0], fp) - 1.0) < 1e-6

    @pytest.mark.parametrize("kind", ["PT", "ST"])
    def test_k2_against_mc(self, oracles, kind):
        fp = FusionProblem(0.0, 1.0, [(0.0, 0.1), (0.0, 0.2)])
        assert_within_mc(coverage_fusion(kind, 2.0, [0.5, 1.0], fp), oracles[f"coverage_fusion_{kind}_K2"])

    def test_st_nonincreasing_in_each_bias(self):
        fp = FusionProblem(0.0, 1.0, [(0.0, 0.1), (0.0, 0.2)])
        grid = np.linspace(0, 3, 13)
        for j in range(2):
            T = np.zeros((grid.size, 2))
            T[:, j] = grid
            T[:, 1 - j] = 0.7
            v = coverage_fusion("ST", 2.5, T, fp)
            assert np.all(np.diff(v) <= 1e-7)

    def test_too_many_sources(self):
        fp = FusionProblem(0.0, 1.0, [(0.0, 1.0)] * 9)
        with pytest.raises(DimensionError):
            coverage_fusion("ST", 2.0, np.zeros(9), fp)
