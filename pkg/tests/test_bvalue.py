import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bvalue.b_values import b_surface, b_value, b_value_generic
from bvalue.coverage import coverage_pw
from bvalue.errors import MonotonicityError, PreconditionError
from bvalue.estimators import EstimatorPair, FusionProblem, MultiProblem, point_estimate
from bvalue.numerics import Tolerance
from bvalue.solver import confidence_interval, half_length_fusion, region_radius

FIG = EstimatorPair(1.0, 2.0, 1.0, 0.1)
KINDS = ("PW", "PT", "ST")


def generic(kind, pair, zeta=0.05, alpha=0.05):
    curve = lambda b: confidence_interval(kind, pair, b, zeta, alpha).half_length_scaled
    return b_value_generic(curve, abs(point_estimate(kind, pair, alpha)), kind, zeta, tol=Tolerance(1e-10))


def test_zero_estimate_gives_zero():
    for kind in KINDS:
        bv = b_value(kind, EstimatorPair(0.0, 0.0, 1.0, 0.1))
        assert bv.value == 0.0 and bv.case == "zero"


def test_pw_defining_equation():
    bv = b_value("PW", FIG)
    L_obs = abs(point_estimate("PW", FIG)) / FIG.scale
    assert bv.case == "finite"
    assert abs(coverage_pw(L_obs, bv.value, FIG.gamma) - 0.95) < 1e-8
    assert abs(bv.residual) < 1e-8


@pytest.mark.parametrize("kind", KINDS)
def test_reference_pair_specialized_matches_generic(kind):
    assert abs(b_value(kind, FIG).value - generic(kind, FIG).value) < 1e-6


@pytest.mark.parametrize("kind", KINDS)
def test_membership_flips_at_b_value(kind):
    bv = b_value(kind, FIG)
    assert not confidence_interval(kind, FIG, bv.value * (1 - 1e-4)).contains(0.0)
    assert confidence_interval(kind, FIG, bv.value * (1 + 1e-4)).contains(0.0)


def test_infinite_case_soft_threshold():
    # a large rejection keeps the soft-threshold estimate far from 0 for every bias
    pair = EstimatorPair(8.0, 30.0, 1.0, 0.1)
    bv = b_value("ST", pair)
    assert bv.case == "infinite"
    assert not confidence_interval("ST", pair, 1e4).contains(0.0)
    assert b_value("PW", pair).case == "finite"


def test_infinite_case_pretest():
    pair = EstimatorPair(8.0, 30.0, 1.0, 0.1)
    bv = b_value("PT", pair)
    assert bv.case == "infinite"
    assert not confidence_interval("PT", pair, 1e3).contains(0.0)


def test_correlated_pair_refused():
    with pytest.raises(PreconditionError):
        b_value("PW", EstimatorPair(1.0, 2.0, 1.0, 0.1, rho=0.4))


class TestGeneric:
    def test_zero_observed(self):
        assert b_value_generic(lambda b: 1.0 + b, 0.0).value == 0.0

    def test_beyond_supremum(self):
        bv = b_value_generic(lambda b: 2.0 - 1.0 / (1.0 + b), 3.0)
        assert bv.case == "infinite"

    def test_simple_root(self):
        assert abs(b_value_generic(lambda b: 1.0 + b, 3.5).value - 2.5) < 1e-10

    def test_decreasing_curve(self):
        bump = lambda b: 1.0 + b if b <= 1.0 else 3.0 - b
        with pytest.raises(MonotonicityError):
            b_value_generic(bump, 1.5)

    def test_pw_random_configs(self):
        rng = np.random.default_rng(17)
        for _ in range(20):
            g = float(np.exp(rng.uniform(np.log(0.5), np.log(100))))
            pair = EstimatorPair(float(rng.normal(0, 2)), float(rng.normal(0, 3)), 1.0, 1.0 / g)
            a, b = b_value("PW", pair), generic("PW", pair)
            assert a.case == b.case
            if a.case == "finite":
                assert abs(a.value - b.value) < 1e-6


@settings(max_examples=15)
@given(st.floats(-4, 4), st.floats(-6, 6), st.floats(0.5, 80), st.floats(0.01, 0.1))
def test_monotone_in_zeta(t0, t1, g, zeta):
    pair = EstimatorPair(t0, t1, 1.0, 1.0 / g)
    for kind in ("PW", "ST"):
        assert b_value(kind, pair, zeta / 2).value <= b_value(kind, pair, zeta).value + 1e-8


# ---------------------------------------------------------------------------
# Surfaces


def test_surface_centered_at_zero():
    p = MultiProblem(np.zeros(2), np.zeros(2), np.eye(2), 0.1 * np.eye(2))
    for kind in KINDS:
        s = b_surface(kind, p, n_rays=5)
        assert np.all(s.radii == 0.0)


@pytest.mark.parametrize("kind", KINDS)
def test_surface_one_dimensional_fusion(kind):
    fp = FusionProblem(1.0, 1.0, [(2.0, 0.1)])
    s = b_surface(kind, fp, 0.05, 0.05)
    assert abs(s.radii[0] - b_value(kind, FIG).value) < 1e-6


@pytest.mark.parametrize("kind", ["PW", "ST"])
def test_surface_one_dimensional_multivariate(kind):
    c = 1.959963984540054
    p = MultiProblem([1.0], [2.0], [[1.0]], [[0.1]], q=c**2, h_star=lambda r: np.sqrt(c**2 / r))
    s = b_surface(kind, p, 0.05)
    assert abs(s.radii[0] - b_value(kind, FIG).value) < 1e-6


@pytest.mark.parametrize("kind", ["PW", "ST"])
def test_surface_swap_symmetry(kind):
    p = MultiProblem([1.0, 1.0], [2.0, 2.0], np.eye(2), 0.1 * np.eye(2))
    s = b_surface(kind, p, n_rays=9)
    swapped = b_surface(kind, p, directions=s.directions[:, ::-1])
    assert np.allclose(s.radii, swapped.radii, atol=1e-6)
    assert np.allclose(s.radii, s.radii[::-1], atol=1e-6)


def test_surface_membership_monotone_along_ray():
    p = MultiProblem([1.0, 0.4], [2.0, 1.0], np.eye(2), 0.1 * np.eye(2))
    e = np.array([[0.6, 0.8]])
    r = b_surface("ST", p, directions=e).radii[0]
    assert 0 < r < math.inf
    for f in (0.2, 0.5, 0.9, 0.999, 1.001, 1.2, 2.0, 4.0):
        region = region_radius("ST", f * r * e[0], 0.05, p)
        assert region.contains(np.zeros(2)) == (f > 1), f


def test_fusion_surface_point_on_boundary():
    fp = FusionProblem(1.0, 1.0, [(2.0, 0.1), (1.8, 0.2)])
    s = b_surface("ST", fp, n_rays=3)
    for e, r in s.rays:
        if 0 < r < math.inf:
            res_in = half_length_fusion("ST", e * r * (1 + 1e-4), 0.05, fp)
            res_out = half_length_fusion("ST", e * r * (1 - 1e-4), 0.05, fp)
            c = abs(res_in.center)
            assert res_in.half_length_scaled >= c > res_out.half_length_scaled
