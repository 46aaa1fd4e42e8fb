"""Exception and warning types raised across the package."""


class BValueError(Exception):
    """Base class for errors raised by this package."""


class DomainError(BValueError, ValueError):
    """An argument lies outside the domain of the operation."""


class DimensionError(DomainError):
    """Problem dimension exceeds what a routine supports."""


class BracketError(BValueError):
    """A root-finding bracket does not contain a sign change."""


class IntegrationError(BValueError):
    """Quadrature failed: non-finite integrand or no convergence."""


class SolverError(BValueError):
    """An interval/region solver could not produce a certified answer."""


class MonotonicityError(BValueError):
    """A function assumed monotone was observed to decrease."""


class PreconditionError(BValueError, ValueError):
    """Inputs violate a documented precondition (e.g. correlated pair)."""


class SingularReparametrizationError(DomainError):
    """rho * sigma1 == sigma0: the decorrelating map is undefined."""


class DegenerateVarianceError(DomainError):
    """A reparametrized variance collapsed to zero."""


class AccuracyWarning(UserWarning):
    """A Monte Carlo / QMC estimate carries a large standard error."""


class ConditioningWarning(UserWarning):
    """A transformation is close to singular."""
