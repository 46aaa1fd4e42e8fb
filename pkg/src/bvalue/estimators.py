"""Problem containers and point estimators for the single-pair, vector and
multi-source settings."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from typing import Callable, Sequence

import numpy as np
from scipy import stats

from .errors import DomainError, PreconditionError
from .numerics import upper_quantile


class Kind(str, Enum):
    PW = "PW"  # precision weighted
    PT = "PT"  # pretest, hard threshold
    ST = "ST"  # soft threshold

    @classmethod
    def parse(cls, kind) -> "Kind":
        if isinstance(kind, cls):
            return kind
        try:
            return cls(str(kind).upper())
        except ValueError:
            raise DomainError(f"unknown estimator kind {kind!r}") from None


def _check_prob(name: str, p: float) -> float:
    if not 0.0 < p < 1.0:
        raise DomainError(f"{name} must lie in (0, 1), got {p}")
    return float(p)


# ---------------------------------------------------------------------------
# Single pair


@dataclass(frozen=True)
class EstimatorPair:
    """Summary statistics of one unbiased and one biased estimator."""

    tau0_hat: float
    tau1_hat: float
    sigma0_sq: float
    sigma1_sq: float
    rho: float = 0.0

    def __post_init__(self):
        for name in ("tau0_hat", "tau1_hat", "sigma0_sq", "sigma1_sq", "rho"):
            if not math.isfinite(getattr(self, name)):
                raise DomainError(f"{name} must be finite")
        if self.sigma0_sq <= 0 or self.sigma1_sq <= 0:
            raise DomainError("variances must be positive")
        if not -1.0 <= self.rho <= 1.0:
            raise DomainError(f"rho must lie in [-1, 1], got {self.rho}")

    @property
    def gamma(self) -> float:
        return self.sigma0_sq / self.sigma1_sq

    @property
    def sigma0(self) -> float:
        return math.sqrt(self.sigma0_sq)

    @property
    def sigma1(self) -> float:
        return math.sqrt(self.sigma1_sq)

    @property
    def sigma(self) -> float:
        """Standard deviation of tau1_hat - tau0_hat (independent case)."""
        return math.sqrt(self.sigma0_sq + self.sigma1_sq)

    @property
    def diff(self) -> float:
        return self.tau1_hat - self.tau0_hat

    @property
    def scale(self) -> float:
        """Standard deviation of the precision-weighted estimator."""
        return self.sigma0 / math.sqrt(1.0 + self.gamma)

    def pretest_threshold(self, alpha: float) -> float:
        return self.sigma * upper_quantile(_check_prob("alpha", alpha) / 2.0)


def _require_independent(pair: EstimatorPair):
    if pair.rho != 0.0:
        raise PreconditionError(
            f"rho = {pair.rho} != 0: decorrelate the pair first (see bvalue.dependence.decorrelate)"
        )


def point_pw(pair: EstimatorPair) -> float:
    _require_independent(pair)
    g = pair.gamma
    return pair.tau0_hat + g / (1.0 + g) * pair.diff


def point_pt(pair: EstimatorPair, alpha: float) -> float:
    _require_independent(pair)
    if abs(pair.diff) <= pair.pretest_threshold(alpha):
        return point_pw(pair)
    return pair.tau0_hat


def point_st(pair: EstimatorPair, alpha: float) -> float:
    _require_independent(pair)
    thr = pair.pretest_threshold(alpha)
    if abs(pair.diff) <= thr:
        return point_pw(pair)
    g = pair.gamma
    return pair.tau0_hat + g / (1.0 + g) * thr * math.copysign(1.0, pair.diff)


def point_estimate(kind, pair: EstimatorPair, alpha: float = 0.05) -> float:
    kind = Kind.parse(kind)
    if kind is Kind.PW:
        return point_pw(pair)
    if kind is Kind.PT:
        return point_pt(pair, alpha)
    return point_st(pair, alpha)


# ---------------------------------------------------------------------------
# Vector setting


def shrink_sqrt(q: float) -> Callable[[np.ndarray], np.ndarray]:
    """h(r) = sqrt(q / r); with d = 1 and q = c^2 this is the scalar soft threshold."""
    return lambda r: np.sqrt(q / np.asarray(r, dtype=float))


def shrink_inverse(q: float) -> Callable[[np.ndarray], np.ndarray]:
    """h(r) = q / r."""
    return lambda r: q / np.asarray(r, dtype=float)


H_STAR_BUILTINS = {"sqrt": shrink_sqrt, "inverse": shrink_inverse}


def sym_sqrt(a: np.ndarray, inverse: bool = False) -> np.ndarray:
    """Symmetric square root (or inverse root) with eigenvalues floored at
    1e-12 * trace."""
    w, v = np.linalg.eigh(a)
    w = np.maximum(w, 1e-12 * np.trace(a))
    p = -0.5 if inverse else 0.5
    return (v * w**p) @ v.T


def _spd(name: str, m) -> np.ndarray:
    m = np.atleast_2d(np.asarray(m, dtype=float))
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DomainError(f"{name} must be square")
    if not np.allclose(m, m.T, rtol=1e-10, atol=1e-14):
        raise DomainError(f"{name} must be symmetric")
    try:
        np.linalg.cholesky(m)
    except np.linalg.LinAlgError:
        raise DomainError(f"{name} must be positive definite") from None
    return 0.5 * (m + m.T)


@dataclass(frozen=True, eq=False)
class MultiProblem:
    """Vector estimators with covariances, a scaling matrix for the bias and
    the pretest threshold ``q`` with shrinkage function ``h_star``.

    ``q`` defaults to the chi-squared (1 - alpha) quantile with d degrees of
    freedom. ``h_star`` is a name from :data:`H_STAR_BUILTINS` or a callable
    on [q, inf) that is nonincreasing with h_star(q) = 1.
    """

    tau0_hat: np.ndarray
    tau1_hat: np.ndarray
    Sigma0: np.ndarray
    Sigma1: np.ndarray
    Sigma_scale: np.ndarray | None = None
    q: float | None = None
    h_star: str | Callable = "sqrt"
    alpha: float = 0.05

    def __post_init__(self):
        t0 = np.atleast_1d(np.asarray(self.tau0_hat, dtype=float))
        t1 = np.atleast_1d(np.asarray(self.tau1_hat, dtype=float))
        d = t0.size
        if t0.ndim != 1 or t1.shape != t0.shape:
            raise DomainError("tau0_hat and tau1_hat must be vectors of equal length")
        s0 = _spd("Sigma0", self.Sigma0)
        s1 = _spd("Sigma1", self.Sigma1)
        ss = s0 if self.Sigma_scale is None else _spd("Sigma_scale", self.Sigma_scale)
        for name, m in (("Sigma0", s0), ("Sigma1", s1), ("Sigma_scale", ss)):
            if m.shape != (d, d):
                raise DomainError(f"{name} must be {d}x{d}")
        q = self.q
        if q is None:
            q = float(stats.chi2.ppf(1.0 - _check_prob("alpha", self.alpha), d))
        if not q >= 0:
            raise DomainError(f"q must be nonnegative, got {q}")
        object.__setattr__(self, "tau0_hat", t0)
        object.__setattr__(self, "tau1_hat", t1)
        object.__setattr__(self, "Sigma0", s0)
        object.__setattr__(self, "Sigma1", s1)
        object.__setattr__(self, "Sigma_scale", ss)
        object.__setattr__(self, "q", float(q))
        h = self.h_star
        if isinstance(h, str):
            if h not in H_STAR_BUILTINS:
                raise DomainError(f"unknown h_star {h!r}; choose from {sorted(H_STAR_BUILTINS)}")
            fn = H_STAR_BUILTINS[h](q)
        else:
            fn = h
        object.__setattr__(self, "_h_fn", fn)
        self._check_h()

    def _check_h(self):
        q = self.q
        if q == 0:
            return
        r = q * np.concatenate([[1.0], np.geomspace(1.0 + 1e-6, 1e6, 63)])
        v = np.asarray(self._h_fn(r), dtype=float)
        if v.shape != r.shape or not np.all(np.isfinite(v)):
            raise DomainError("h_star must map arrays to finite arrays of equal shape")
        if abs(v[0] - 1.0) > 1e-9:
            raise DomainError(f"h_star(q) must equal 1, got {v[0]}")
        if np.any(np.diff(v) > 1e-12) or np.any(v < -1e-12) or np.any(v > 1 + 1e-12):
            raise DomainError("h_star must be nonincreasing with values in [0, 1]")

    @property
    def d(self) -> int:
        return self.tau0_hat.size

    def shrinkage(self, r) -> np.ndarray:
        """h_q(r): 1 on [0, q], h_star(r) beyond."""
        r = np.asarray(r, dtype=float)
        out = np.ones_like(r)
        big = r > self.q
        if np.any(big):
            out[big] = self._h_fn(r[big])
        return out

    @cached_property
    def precision(self) -> np.ndarray:
        """P = Sigma0^-1 + Sigma1^-1, the metric of the confidence ellipsoid."""
        return np.linalg.inv(self.Sigma0) + np.linalg.inv(self.Sigma1)

    @cached_property
    def weight(self) -> np.ndarray:
        """A = P^-1 Sigma1^-1, the weight on tau1_hat - tau0_hat."""
        return np.linalg.solve(self.precision, np.linalg.inv(self.Sigma1))

    @cached_property
    def whiten_pw(self) -> np.ndarray:
        """B = P^{-1/2} Sigma1^-1."""
        return sym_sqrt(self.precision, inverse=True) @ np.linalg.inv(self.Sigma1)

    @cached_property
    def scale_root(self) -> np.ndarray:
        return sym_sqrt(self.Sigma_scale)

    @cached_property
    def diff_cov(self) -> np.ndarray:
        """W = Sigma0 + Sigma1, covariance of tau1_hat - tau0_hat."""
        return self.Sigma0 + self.Sigma1

    @cached_property
    def diff_root(self) -> np.ndarray:
        return sym_sqrt(self.diff_cov)

    @cached_property
    def diff_root_inv(self) -> np.ndarray:
        return sym_sqrt(self.diff_cov, inverse=True)

    @cached_property
    def precision_root(self) -> np.ndarray:
        return sym_sqrt(self.precision)

    def pretest_stat(self) -> float:
        z = self.diff_root_inv @ (self.tau1_hat - self.tau0_hat)
        return float(z @ z)


def point_multivariate(kind, problem: MultiProblem) -> np.ndarray:
    kind = Kind.parse(kind)
    diff = problem.tau1_hat - problem.tau0_hat
    step = problem.weight @ diff
    if kind is Kind.PW:
        return problem.tau0_hat + step
    r = problem.pretest_stat()
    if kind is Kind.PT:
        return problem.tau0_hat + step if r <= problem.q else problem.tau0_hat.copy()
    return problem.tau0_hat + float(problem.shrinkage(np.array([r]))[0]) * step


# ---------------------------------------------------------------------------
# Multiple biased sources


@dataclass(frozen=True, eq=False)
class FusionProblem:
    """One unbiased estimator and K biased ones, all independent."""

    tau0_hat: float
    sigma0_sq: float
    biased: Sequence[tuple[float, float]] = field(default_factory=tuple)

    def __post_init__(self):
        b = tuple((float(t), float(s)) for t, s in self.biased)
        if len(b) < 1:
            raise DomainError("need at least one biased estimator")
        if self.sigma0_sq <= 0 or any(s <= 0 for _, s in b):
            raise DomainError("variances must be positive")
        if not all(math.isfinite(x) for pair in b for x in pair) or not math.isfinite(self.tau0_hat):
            raise DomainError("estimates and variances must be finite")
        object.__setattr__(self, "biased", b)

    @property
    def K(self) -> int:
        return len(self.biased)

    @property
    def sigma0(self) -> float:
        return math.sqrt(self.sigma0_sq)

    @property
    def taus(self) -> np.ndarray:
        return np.array([t for t, _ in self.biased])

    @property
    def gammas(self) -> np.ndarray:
        return self.sigma0_sq / np.array([s for _, s in self.biased])

    @property
    def gamma_total(self) -> float:
        return float(self.gammas.sum())

    @property
    def scale(self) -> float:
        return self.sigma0 / math.sqrt(1.0 + self.gamma_total)

    def thresholds(self, alpha: float) -> np.ndarray:
        """Per-source pretest thresholds in units of sigma0."""
        return np.sqrt(1.0 + 1.0 / self.gammas) * upper_quantile(_check_prob("alpha", alpha) / 2.0)


def point_fusion(kind, problem: FusionProblem, alpha: float = 0.05) -> float:
    kind = Kind.parse(kind)
    g = problem.gammas
    w = g / (1.0 + g.sum())
    diff = problem.taus - problem.tau0_hat
    if kind is Kind.PW:
        return float(problem.tau0_hat + w @ diff)
    thr = problem.thresholds(alpha) * problem.sigma0
    accept = np.abs(diff) <= thr
    step = np.where(accept, diff, 0.0)
    if kind is Kind.ST:
        step = step + np.where(accept, 0.0, thr * np.sign(diff))
    return float(problem.tau0_hat + w @ step)
