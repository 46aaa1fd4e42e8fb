"""Reduction of a correlated pair to an independent one.

With kappa = rho * sigma1 / sigma0, the combination
``(tau1_hat - kappa * tau0_hat) / (1 - kappa)`` is uncorrelated with
``tau0_hat``, targets the same tau and has bias Delta / (1 - kappa). Intervals
are built on the decorrelated pair with the bias bound divided by
``|1 - kappa|``, and b-values are multiplied back by it.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

from .b_values import BValue, b_value
from .errors import ConditioningWarning, DegenerateVarianceError, DomainError, SingularReparametrizationError
from .estimators import EstimatorPair
from .solver import ROOT_TOL, IntervalResult, Tolerance, confidence_interval

CONDITIONING_THRESHOLD = 1e-3


@dataclass(frozen=True)
class DecorrelationMap:
    original: EstimatorPair
    pair_prime: EstimatorPair
    scale: float  # |1 - rho sigma1 / sigma0|

    @property
    def kappa(self) -> float:
        o = self.original
        return o.rho * o.sigma1 / o.sigma0


def decorrelate(pair: EstimatorPair) -> DecorrelationMap:
    """Map a correlated pair to an uncorrelated one with the same target."""
    kappa = pair.rho * pair.sigma1 / pair.sigma0
    one_minus = 1.0 - kappa
    if abs(one_minus) <= 1e-12:
        raise SingularReparametrizationError("rho * sigma1 equals sigma0; the bias cannot be reparametrized")
    var1 = (1.0 - pair.rho**2) * pair.sigma1_sq / one_minus**2
    if var1 <= 0.0:
        raise DegenerateVarianceError("the decorrelated biased estimator has zero variance (|rho| = 1)")
    scale = abs(one_minus)
    if scale < CONDITIONING_THRESHOLD:
        warnings.warn(f"|1 - rho sigma1/sigma0| = {scale:.3g}: bias bounds are magnified by {1 / scale:.3g}",
                      ConditioningWarning, stacklevel=2)
    tau1 = (pair.tau1_hat - kappa * pair.tau0_hat) / one_minus
    prime = EstimatorPair(pair.tau0_hat, tau1, pair.sigma0_sq, var1, 0.0)
    return DecorrelationMap(original=pair, pair_prime=prime, scale=scale)


def map_bias_bound(b: float, mapping: DecorrelationMap, direction: str = "to_prime") -> float:
    """Convert a relative bias bound between the original and decorrelated
    parametrizations (``direction`` is "to_prime" or "from_prime")."""
    if b < 0:
        raise DomainError("bias bound must be nonnegative")
    if direction == "to_prime":
        return b / mapping.scale
    if direction == "from_prime":
        return mapping.scale * b
    raise DomainError(f"direction must be 'to_prime' or 'from_prime', got {direction!r}")


def correlated_interval(kind, pair: EstimatorPair, b: float, zeta: float = 0.05, alpha: float = 0.05,
                        side="two_sided", tol: Tolerance = ROOT_TOL) -> IntervalResult:
    """Interval for tau from a possibly correlated pair, valid for |Delta| <= b sigma0."""
    m = decorrelate(pair)
    res = confidence_interval(kind, m.pair_prime, map_bias_bound(b, m), zeta, alpha, side, tol)
    res.diagnostics = dict(res.diagnostics, b_prime=res.bound_b, scale=m.scale)
    res.bound_b = b
    return res


def correlated_b_value(kind, pair: EstimatorPair, zeta: float = 0.05, alpha: float = 0.05,
                       side="two_sided") -> tuple[BValue, BValue, DecorrelationMap]:
    """b-value on the original scale, the b-value of the decorrelated pair
    and the map between them."""
    m = decorrelate(pair)
    prime = b_value(kind, m.pair_prime, zeta, alpha, side)
    value = prime.value if prime.case != "finite" else map_bias_bound(prime.value, m, "from_prime")
    orig = BValue(value=value, case=prime.case, kind=prime.kind, zeta=zeta, residual=prime.residual,
                  diagnostics=dict(prime.diagnostics, scale=m.scale, b_prime=prime.value))
    return orig, prime, m
