"""b-values: the smallest bias bound at which the robust interval (or
ellipsoid) starts to contain the null value 0.

Rather than bisecting on the interval as a function of b, the observed
estimate is turned into a standardized length and the coverage equation is
solved for b with that length held fixed. At a finite b-value the
worst-case coverage of the observed length equals 1 - zeta exactly.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .coverage import FusionCoverage, MultiCoverage, Side, coverage, coverage_limit, saturation_bias
from .errors import BracketError, DomainError, MonotonicityError, PreconditionError
from .estimators import (
    EstimatorPair,
    FusionProblem,
    Kind,
    MultiProblem,
    point_estimate,
    point_fusion,
    point_multivariate,
)
from .numerics import (
    QmcConfig,
    Tolerance,
    find_root_monotone,
    minimize_on_interval,
    noncentral_chisq_cdf,
    normal_prob,
)
from .solver import _box_grid, _coordinate_refine, _sign_vertices

B_CAP = 1e6
B_TOL = Tolerance(abs_tol=1e-11, max_iter=300)


@dataclass
class BValue:
    value: float
    case: str  # "zero", "finite" or "infinite"
    kind: str
    zeta: float
    residual: float = 0.0
    diagnostics: dict = field(default_factory=dict)


def _bvalue(value, kind, zeta, residual=0.0, **diag) -> BValue:
    if value == 0.0:
        case = "zero"
    elif math.isinf(value):
        case = "infinite"
    else:
        case = "finite"
    return BValue(value=float(value), case=case, kind=str(kind), zeta=zeta, residual=residual, diagnostics=diag)


def _decreasing_root(h: Callable[[float], float], lo: float, start: float, cap: float, tol: Tolerance):
    """Root of a nonincreasing h with h(lo) > 0 on [lo, cap]; None if h(cap) > 0."""
    hi = max(start, lo)
    while h(hi) > 0.0:
        if hi >= cap:
            return None
        lo = hi
        hi = min(cap, 2.0 * hi + 1.0)
    return find_root_monotone(lambda b: -h(b), lo, hi, tol)


def b_value(kind, pair: EstimatorPair, zeta: float = 0.05, alpha: float = 0.05, side="two_sided",
            tol: Tolerance = B_TOL, n_grid: int = 512) -> BValue:
    """b-value of a decorrelated pair.

    The interval at bias bound b contains 0 exactly when the worst-case
    coverage of the observed standardized length ``|estimate| / scale`` over
    |t| <= b is at most 1 - zeta. That coverage is nonincreasing in b, so
    the b-value is 0 when the inequality already holds at b = 0, infinite
    when it fails as b -> infinity, and otherwise the single root in b.

    For one-sided bounds (side="lower") the null value is 0 and the bound
    contains it when ``estimate - L * scale <= 0``; a negative estimate gives 0.
    """
    kind = Kind.parse(kind)
    side = Side.parse(side)
    if pair.rho != 0.0:
        raise PreconditionError("correlated pair: decorrelate first or use bvalue.dependence.correlated_b_value")
    if not 0.0 < zeta < 1.0:
        raise DomainError(f"zeta must lie in (0, 1), got {zeta}")
    est = point_estimate(kind, pair, alpha)
    g = pair.gamma
    if side is Side.TWO_SIDED:
        L_obs = abs(est) / pair.scale
    elif side is Side.LOWER:
        L_obs = est / pair.scale
    else:
        L_obs = -est / pair.scale
    target = 1.0 - zeta
    if L_obs <= 0.0:
        return _bvalue(0.0, kind.value, zeta, L_obs=L_obs)
    # for one-sided upper bounds, the sign flip maps the problem to a lower bound
    cside = Side.LOWER if side is not Side.TWO_SIDED else side

    if kind is Kind.PT:
        span = saturation_bias(g, alpha)

        def worst(b):
            tmax = min(b, span)
            lo = 0.0 if cside is Side.TWO_SIDED else -tmax
            f = lambda t: coverage(kind, L_obs, t, g, alpha, cside)
            return minimize_on_interval(f, lo, tmax, n_grid=n_grid, tol=1e-9)[1]

        sup_b = span
        limit = worst(span)
    else:
        worst = lambda b: coverage(kind, L_obs, b, g, alpha, cside)
        sup_b = math.inf
        limit = 0.0 if kind is Kind.PW else coverage_limit(kind, L_obs, g, alpha, cside)

    h = lambda b: worst(b) - target
    h0 = h(0.0)
    if h0 <= 0.0:
        return _bvalue(0.0, kind.value, zeta, residual=h0, L_obs=L_obs)
    if limit > target:
        return _bvalue(math.inf, kind.value, zeta, residual=limit - target, L_obs=L_obs, limit_coverage=limit)
    b_star = _decreasing_root(h, 0.0, 1.0, min(B_CAP, sup_b), tol)
    if b_star is None:
        return _bvalue(math.inf, kind.value, zeta, residual=h(B_CAP), L_obs=L_obs)
    return _bvalue(b_star, kind.value, zeta, residual=h(b_star), L_obs=L_obs)


def b_value_generic(curve: Callable[[float], float], observed: float, kind: str = "generic", zeta: float = math.nan,
                    tol: Tolerance = B_TOL, cap: float = B_CAP, probe_tol: float = 1e-9) -> BValue:
    """inf{b >= 0 : curve(b) >= observed} for a nondecreasing half-length curve.

    ``curve`` maps a bias bound to the scaled half-length and ``observed`` is
    the distance from the estimate to the null value. Raises
    :class:`MonotonicityError` if the probes show the curve decreasing.
    """
    if observed < 0:
        raise DomainError("observed distance must be nonnegative")
    probes = []

    def c(b):
        v = float(curve(b))
        for bp, vp in probes:
            if (b > bp and v < vp - probe_tol * max(1.0, abs(vp))) or (b < bp and v > vp + probe_tol * max(1.0, abs(vp))):
                raise MonotonicityError(f"half-length decreases between b={min(b, bp)} and b={max(b, bp)}")
        probes.append((b, v))
        return v

    if c(0.0) >= observed:
        return _bvalue(0.0, kind, zeta, residual=probes[-1][1] - observed)
    if c(cap) < observed:
        return _bvalue(math.inf, kind, zeta, residual=probes[-1][1] - observed)
    g = lambda b: c(b) - observed
    lo, hi = 0.0, 1.0
    while g(hi) < 0.0:
        lo, hi = hi, min(cap, 4.0 * hi)
    root = find_root_monotone(g, lo, hi, tol)
    return _bvalue(root, kind, zeta, residual=g(root), evaluations=len(probes))


# ---------------------------------------------------------------------------
# Surfaces


@dataclass
class BSurface:
    """Per-ray radii of the boundary of {b : 0 is inside the region at b}."""

    directions: np.ndarray
    radii: np.ndarray
    kind: str
    zeta: float
    diagnostics: list = field(default_factory=list)

    @property
    def rays(self):
        return list(zip(self.directions, self.radii))

    @property
    def points(self) -> np.ndarray:
        """Boundary points radius * direction (inf/nan rows where undefined)."""
        return self.directions * self.radii[:, None]


def default_directions(dim: int, n_rays: int = 33) -> np.ndarray:
    """Unit directions in the positive orthant: evenly spaced angles when dim
    is 2, the single direction (1,) when dim is 1."""
    if dim == 1:
        return np.ones((1, 1))
    if dim != 2:
        raise DomainError("directions must be supplied when the dimension exceeds 2")
    ang = np.linspace(0.0, math.pi / 2.0, n_rays)
    d = np.stack([np.cos(ang), np.sin(ang)], axis=1)
    d[np.abs(d) < 1e-15] = 0.0
    return d


def _box_min(make_eval, b: np.ndarray, length: float) -> float:
    """Smallest coverage over the box [-b, b] at a fixed length (grid search,
    coordinate refinement, exact re-evaluation)."""
    if not np.any(b > 0):
        return float(make_eval(np.zeros((1, b.size)), False)(length)[0])
    coarse = lambda T: make_eval(T, True)(length)
    pts = np.vstack([_sign_vertices(b), _box_grid(b)])
    vals = coarse(pts)
    starts = pts[np.argsort(vals)[:3]]
    cands = np.array([_coordinate_refine(coarse, s, b)[0] for s in starts])
    cands = np.vstack([cands, _sign_vertices(b)])
    return float(np.min(make_eval(cands, False)(length)))


def b_surface(kind, problem, zeta: float = 0.05, alpha_or_q: float | None = None, n_rays: int = 33,
              directions: Sequence | None = None, qmc: QmcConfig | None = None, tol: float = 1e-8) -> BSurface:
    """Trace the b-value boundary along rays in the positive orthant.

    ``problem`` is a :class:`MultiProblem` (``alpha_or_q`` then overrides its
    threshold q) or a :class:`FusionProblem` (``alpha_or_q`` is the pretest
    level, default 0.05). Membership of 0 along each ray is monotone in the
    radius; PW and ST radii come from a root of the vertex coverage, PT radii
    from bisection on the box-search membership test. Radii beyond 1e6 are
    reported as infinite. Failures on a ray give a NaN radius and an
    ``error`` entry in that ray's diagnostics.
    """
    kind = Kind.parse(kind)
    if not 0.0 < zeta < 1.0:
        raise DomainError(f"zeta must lie in (0, 1), got {zeta}")
    target = 1.0 - zeta
    if isinstance(problem, MultiProblem):
        if alpha_or_q is not None:
            problem = dataclasses.replace(problem, q=float(alpha_or_q))
        dim = problem.d
        center = point_multivariate(kind, problem)
        obs = float(center @ problem.precision @ center)
        qmc = qmc or QmcConfig(n_points=16384, dim=dim)

        def make_eval(T, coarse):
            cfg = QmcConfig(n_points=2048, seed=qmc.seed, dim=dim) if coarse else qmc
            return MultiCoverage(kind, problem, T, qmc=cfg)

        def pw_cov(t):
            lam = np.sum((t @ (problem.whiten_pw @ problem.scale_root).T) ** 2, axis=1)
            return noncentral_chisq_cdf(obs, dim, lam)
    elif isinstance(problem, FusionProblem):
        alpha = 0.05 if alpha_or_q is None else float(alpha_or_q)
        dim = problem.K
        obs = abs(point_fusion(kind, problem, alpha)) / problem.scale
        gam = problem.gammas
        root = math.sqrt(1.0 + gam.sum())

        def make_eval(T, coarse):
            return FusionCoverage(kind, problem, T, alpha, nodes=10 if coarse else None)

        def pw_cov(t):
            m = (t @ gam) / root
            return normal_prob(m - obs, m + obs)
    else:
        raise DomainError("problem must be a MultiProblem or FusionProblem")

    dirs = default_directions(dim, n_rays) if directions is None else np.atleast_2d(np.asarray(directions, float))
    if dirs.shape[1] != dim or np.any(dirs < 0) or np.any(np.linalg.norm(dirs, axis=1) == 0):
        raise DomainError("directions must be nonzero vectors in the positive orthant of matching dimension")
    dirs = dirs / np.linalg.norm(dirs, axis=1, keepdims=True)

    def worst(b: np.ndarray) -> float:
        if kind is Kind.PW:
            return float(np.min(pw_cov(_sign_vertices(b))))
        if kind is Kind.ST:
            return float(np.min(make_eval(_sign_vertices(b), False)(obs)))
        return _box_min(make_eval, b, obs)

    radii, diags = [], []
    h0 = worst(np.zeros(dim)) - target
    for e in dirs:
        try:
            if h0 <= 0.0:
                r, info = 0.0, {"case": "zero"}
            elif kind is Kind.PT:
                r, info = _bisect_membership(lambda r: worst(r * e) <= target, tol)
            else:
                r = _decreasing_root(lambda r: worst(r * e) - target, 0.0, 1.0, B_CAP, Tolerance(tol))
                r = math.inf if r is None else r
                info = {"case": "infinite" if math.isinf(r) else "finite"}
        except Exception as exc:  # reported per ray, tracing continues
            r, info = math.nan, {"error": f"{type(exc).__name__}: {exc}"}
        radii.append(r)
        diags.append(info)
    return BSurface(directions=dirs, radii=np.array(radii, float), kind=kind.value, zeta=zeta, diagnostics=diags)


def _bisect_membership(member: Callable[[float], bool], tol: float):
    """Smallest r with member(r) true, for a predicate monotone in r."""
    if member(0.0):
        return 0.0, {"case": "zero"}
    lo, hi = 0.0, 1.0
    while not member(hi):
        if hi >= B_CAP:
            return math.inf, {"case": "infinite"}
        lo, hi = hi, min(B_CAP, 4.0 * hi)
    while hi - lo > tol * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        if member(mid):
            hi = mid
        else:
            lo = mid
    return hi, {"case": "finite", "bracket": (lo, hi)}
