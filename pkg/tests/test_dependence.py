import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bvalue.b_values import b_value
from bvalue.dependence import correlated_b_value, correlated_interval, decorrelate, map_bias_bound
from bvalue.errors import ConditioningWarning, DegenerateVarianceError, SingularReparametrizationError
from bvalue.estimators import EstimatorPair
from bvalue.oracle import McConfig, mc_coverage


def test_identity_when_uncorrelated():
    pair = EstimatorPair(1.0, 2.0, 1.0, 0.1)
    m = decorrelate(pair)
    assert m.pair_prime == pair and m.scale == 1.0
    assert map_bias_bound(0.7, m) == 0.7


def test_degenerate_variance():
    with pytest.raises(DegenerateVarianceError):
        decorrelate(EstimatorPair(0.0, 0.0, 1.0, 0.25, rho=1.0))


def test_singular_reparametrization():
    with pytest.raises(SingularReparametrizationError):
        decorrelate(EstimatorPair(0.0, 0.0, 1.0, 1.0, rho=1.0))


def test_hand_formulas():
    # rho = 0.3, sigma0 = 1, sigma1 = sqrt(0.1)
    s1 = math.sqrt(0.1)
    kappa = 0.3 * s1
    m = decorrelate(EstimatorPair(1.0, 2.0, 1.0, 0.1, rho=0.3))
    assert abs(m.pair_prime.tau1_hat - (2.0 - kappa) / (1 - kappa)) < 1e-14
    assert abs(m.pair_prime.sigma1_sq - 0.91 * 0.1 / (1 - kappa) ** 2) < 1e-14
    assert abs(m.scale - (1 - kappa)) < 1e-15
    assert abs(map_bias_bound(1.0, m) - 1 / (1 - kappa)) < 1e-14


@given(st.floats(0.0, 50.0), st.floats(-0.95, 0.95), st.floats(0.05, 5.0))
def test_round_trip(b, rho, v1):
    m = decorrelate(EstimatorPair(0.0, 1.0, 1.0, v1, rho=rho))
    assert map_bias_bound(map_bias_bound(b, m, "to_prime"), m, "from_prime") == pytest.approx(b, rel=1e-15)


@given(st.floats(-0.99, 0.99), st.floats(0.05, 5.0))
def test_decorrelated_is_uncorrelated(rho, v1):
    pair = EstimatorPair(0.0, 0.0, 1.0, v1, rho=rho)
    m = decorrelate(pair)
    kappa = m.kappa
    # Cov(tau0, (tau1 - kappa tau0) / (1 - kappa)) = (rho s0 s1 - kappa s0^2) / (1 - kappa) = 0
    assert abs((rho * math.sqrt(v1) - kappa) / (1 - kappa)) < 1e-12


def test_conditioning_warning():
    # rho sigma1 / sigma0 = 0.9995
    with pytest.warns(ConditioningWarning):
        decorrelate(EstimatorPair(0.0, 0.0, 1.0, (0.9995 / 0.999) ** 2, rho=0.999))


@pytest.mark.parametrize("rho", [-0.5, 0.3, 0.9])
@pytest.mark.parametrize("kind", ["PW", "PT", "ST"])
def test_b_value_scales_back(kind, rho):
    pair = EstimatorPair(0.5, 2.0, 1.0, 0.1, rho=rho)
    orig, prime, m = correlated_b_value(kind, pair)
    assert prime.value == b_value(kind, m.pair_prime).value
    if prime.case == "finite":
        assert orig.value == m.scale * prime.value


@pytest.mark.parametrize("rho", [-0.5, 0.3, 0.9])
def test_mapped_interval_covers(rho):
    pair = EstimatorPair(0.0, 0.0, 1.0, 0.1, rho=rho)
    cfg = McConfig(n_draws=200_000, seed=3)
    b = 0.8
    for kind in ("PW", "ST"):
        r = correlated_interval(kind, pair, b)
        for delta in (-b, 0.0, b):
            p, se = mc_coverage(kind, "univariate", delta, pair, r, cfg)
            assert p >= 0.95 - 3 * se, (kind, delta, p, se)
