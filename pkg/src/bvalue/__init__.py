"""Bias-robust confidence intervals for combinations of an unbiased and a
possibly biased estimator, with b-values and Monte Carlo verification."""

__version__ = "0.1.0"

from .b_values import BSurface, BValue, b_surface, b_value, b_value_generic
from .coverage import (
    FusionCoverage,
    MultiCoverage,
    Side,
    coverage,
    coverage_fusion,
    coverage_limit,
    coverage_multivariate,
    coverage_one_sided,
    coverage_pt,
    coverage_pw,
    coverage_st,
    saturation_bias,
)
from .dependence import DecorrelationMap, correlated_b_value, correlated_interval, decorrelate, map_bias_bound
from .errors import (
    AccuracyWarning,
    BracketError,
    BValueError,
    ConditioningWarning,
    DegenerateVarianceError,
    DimensionError,
    DomainError,
    IntegrationError,
    MonotonicityError,
    PreconditionError,
    SingularReparametrizationError,
    SolverError,
)
from .estimators import (
    EstimatorPair,
    FusionProblem,
    Kind,
    MultiProblem,
    point_estimate,
    point_fusion,
    point_multivariate,
    point_pt,
    point_pw,
    point_st,
)
from .oracle import McConfig, mc_coverage, mc_quantile
from .solver import (
    IntervalResult,
    RegionResult,
    confidence_interval,
    half_length_fusion,
    half_length_one_sided,
    half_length_pt,
    half_length_pw,
    half_length_st,
    region_radius,
    sensitivity_curve,
    unbiased_interval,
)
