"""Half-lengths, ellipsoid radii and sensitivity curves.

Every solver finds the smallest standardized length whose worst-case
coverage over the admissible biases reaches ``1 - zeta``. Worst-case
coverage is nondecreasing in the length, so the outer problem is a monotone
root search; the inner problem is a minimization over the bias box, which
collapses to a single point for PW and ST.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .coverage import (
    FusionCoverage,
    MultiCoverage,
    Side,
    coverage,
    saturation_bias,
)
from .errors import BracketError, DimensionError, DomainError, SolverError
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
    expand_upper,
    find_root_monotone,
    minimize_on_interval,
    noncentral_chisq_quantile,
    normal_prob,
    upper_quantile,
)

ROOT_TOL = Tolerance(abs_tol=1e-10, max_iter=200)
MAX_DIM = 8
# a candidate bias is added to the active set when its coverage falls this far below target
VIOLATION_TOL = 1e-7


@dataclass
class IntervalResult:
    """A fixed-length interval ``center +- half_length_scaled``, or a one-sided
    bound when ``side`` is lower/upper."""

    kind: str
    center: float
    half_length_raw: float
    half_length_scaled: float
    bound_b: float | np.ndarray
    side: str = "two_sided"
    worst_case_t: float | np.ndarray = 0.0
    scale: float = 1.0
    diagnostics: dict = field(default_factory=dict)

    @property
    def lower(self) -> float:
        if self.side == Side.UPPER.value:
            return -math.inf
        return self.center - self.half_length_scaled

    @property
    def upper(self) -> float:
        if self.side == Side.LOWER.value:
            return math.inf
        return self.center + self.half_length_scaled

    def contains(self, value: float) -> bool:
        return self.lower <= value <= self.upper


@dataclass
class RegionResult:
    """Ellipsoid ``{tau: (center - tau)' metric (center - tau) <= M}``."""

    kind: str
    center: np.ndarray
    M: float
    metric: np.ndarray
    bound_b: np.ndarray
    worst_case_t: np.ndarray
    diagnostics: dict = field(default_factory=dict)

    def contains(self, value) -> bool:
        r = self.center - np.asarray(value, float)
        return bool(r @ self.metric @ r <= self.M)


def _check_zeta(zeta: float):
    if not 0.0 < zeta < 1.0:
        raise DomainError(f"zeta must lie in (0, 1), got {zeta}")


def _check_b(b):
    b = np.asarray(b, float)
    if np.any(~np.isfinite(b)) or np.any(b < 0):
        raise DomainError(f"bias bound must be finite and nonnegative, got {b}")
    return b


def _solve_length(worst, target: float, lo: float, hi: float, tol: Tolerance):
    """Smallest L in [lo, hi'] with worst(L) >= target, hi expanded as needed.

    ``lo`` is trusted to satisfy worst(lo) <= target up to round-off; if it
    already reaches the target it is returned as is.
    """
    g = lambda L: worst(L) - target
    if g(lo) >= 0.0:
        return lo
    try:
        hi = expand_upper(g, lo, hi)
        return find_root_monotone(g, lo, hi, tol)
    except BracketError as exc:
        raise SolverError(f"could not bracket the half-length: {exc}") from exc


# ---------------------------------------------------------------------------
# Single pair


def half_length_pw(b: float, zeta: float, gamma: float, tol: Tolerance = ROOT_TOL) -> float:
    """Standardized half-length of the precision-weighted interval.

    Root of the folded-normal coverage with mean gamma b / sqrt(1 + gamma).
    """
    _check_zeta(zeta)
    b = float(_check_b(b))
    shift = gamma * b / math.sqrt(1.0 + gamma)
    g = lambda L: float(normal_prob(shift - L, shift + L)) - (1.0 - zeta)
    hi = upper_quantile(zeta / 2.0) + shift + 1.0
    return find_root_monotone(g, 0.0, hi, Tolerance(1e-13, tol.max_iter))


def _pt_search_range(b: float, gamma: float, alpha: float, side: Side):
    tmax = min(b, saturation_bias(gamma, alpha))
    # two-sided coverage is even in t; one-sided coverage is not
    return (0.0, tmax) if side is Side.TWO_SIDED else (-tmax, tmax)


def _pt_worst(L, kind, gamma, alpha, side, lo, hi, n_grid):
    f = lambda t: coverage(kind, L, t, gamma, alpha, side)
    return minimize_on_interval(f, lo, hi, n_grid=n_grid, tol=1e-9)


def _univariate(kind, b, zeta, gamma, alpha, side, tol, lower_bracket=0.0, n_grid=512):
    kind = Kind.parse(kind)
    side = Side.parse(side)
    _check_zeta(zeta)
    b = float(_check_b(b))
    # upper bounds are solved as lower bounds under t -> -t; callers reflect t back
    if side is Side.UPPER:
        side = Side.LOWER
    target = 1.0 - zeta
    c = upper_quantile(alpha / 2.0) if kind is not Kind.PW else 0.0
    if side is Side.TWO_SIDED:
        hi = half_length_pw(b, zeta, gamma) + math.sqrt(gamma) * (c + 10.0)
    else:
        hi = upper_quantile(zeta) + gamma * b / math.sqrt(1.0 + gamma) + math.sqrt(gamma) * (c + 10.0)
    diag = {"evaluations": 0}
    if kind is Kind.PW:
        if side is Side.TWO_SIDED:
            L = half_length_pw(b, zeta, gamma, tol)
        else:
            L = upper_quantile(zeta) + gamma * b / math.sqrt(1.0 + gamma)
        return L, b, diag
    if kind is Kind.ST:
        def worst(L):
            diag["evaluations"] += 1
            return coverage(kind, L, b, gamma, alpha, side)

        L = _solve_length(worst, target, lower_bracket, hi, tol)
        diag["coverage_at_worst"] = worst(L)
        return L, b, diag
    lo_t, hi_t = _pt_search_range(b, gamma, alpha, side)

    def worst(L):
        diag["evaluations"] += 1
        return _pt_worst(L, kind, gamma, alpha, side, lo_t, hi_t, n_grid)[1]

    L = _solve_length(worst, target, lower_bracket, hi, tol)
    t_star, cov = _pt_worst(L, kind, gamma, alpha, side, lo_t, hi_t, n_grid)
    diag.update(coverage_at_worst=cov, search_range=(lo_t, hi_t), n_grid=n_grid)
    return L, t_star, diag


def _result(kind, L, t_star, b, side, diag, pair: EstimatorPair | None, alpha, gamma, sigma0=1.0):
    scale = sigma0 / math.sqrt(1.0 + gamma)
    center = math.nan
    if pair is not None:
        center = point_estimate(kind, pair, alpha)
        scale = pair.scale
    return IntervalResult(
        kind=Kind.parse(kind).value, center=center, half_length_raw=L, half_length_scaled=L * scale,
        bound_b=b, side=Side.parse(side).value, worst_case_t=t_star, scale=scale, diagnostics=diag,
    )


def half_length_pt(b: float, zeta: float, gamma: float, alpha: float, pair: EstimatorPair | None = None,
                   tol: Tolerance = ROOT_TOL, n_grid: int = 512) -> IntervalResult:
    """Pretest interval: worst case searched over t in [0, b] on a grid with
    golden-section refinement."""
    L, t, diag = _univariate(Kind.PT, b, zeta, gamma, alpha, Side.TWO_SIDED, tol, n_grid=n_grid)
    return _result(Kind.PT, L, t, b, Side.TWO_SIDED, diag, pair, alpha, gamma)


def half_length_st(b: float, zeta: float, gamma: float, alpha: float, pair: EstimatorPair | None = None,
                   tol: Tolerance = ROOT_TOL) -> IntervalResult:
    """Soft-threshold interval: coverage decreases in |t|, so the worst case is t = b."""
    L, t, diag = _univariate(Kind.ST, b, zeta, gamma, alpha, Side.TWO_SIDED, tol)
    return _result(Kind.ST, L, t, b, Side.TWO_SIDED, diag, pair, alpha, gamma)


def half_length_one_sided(kind, b: float, zeta: float, gamma: float, alpha: float = 0.05, side="lower",
                          pair: EstimatorPair | None = None, tol: Tolerance = ROOT_TOL) -> IntervalResult:
    """Shortest one-sided bound ``estimate - L * scale`` (lower) or
    ``estimate + L * scale`` (upper).

    PW is closed form, ST is solved at t = b (t = -b for upper), and PT
    searches t over [-b, b].
    """
    side = Side.parse(side)
    if side is Side.TWO_SIDED:
        raise DomainError("half_length_one_sided needs side 'lower' or 'upper'")
    L, t, diag = _univariate(kind, b, zeta, gamma, alpha, side, tol)
    if side is Side.UPPER:
        t = -t
    return _result(kind, L, t, b, side, diag, pair, alpha, gamma)


def confidence_interval(kind, pair: EstimatorPair, b: float, zeta: float = 0.05, alpha: float = 0.05,
                        side="two_sided", tol: Tolerance = ROOT_TOL, lower_bracket: float = 0.0) -> IntervalResult:
    """Interval (or bound) for ``pair`` valid whenever |Delta| <= b * sigma0.

    ``kind="unbiased"`` returns the interval built from tau0_hat alone.
    """
    if str(kind).lower() == "unbiased":
        return unbiased_interval(pair, zeta, side, b)
    if pair.rho != 0.0:
        from .errors import PreconditionError
        raise PreconditionError("correlated pair: use bvalue.dependence.correlated_interval")
    L, t, diag = _univariate(kind, b, zeta, pair.gamma, alpha, side, tol, lower_bracket=lower_bracket)
    if Side.parse(side) is Side.UPPER:
        t = -t
    return _result(kind, L, t, b, side, diag, pair, alpha, pair.gamma)


def unbiased_interval(pair: EstimatorPair, zeta: float = 0.05, side="two_sided", b: float = 0.0) -> IntervalResult:
    _check_zeta(zeta)
    side = Side.parse(side)
    c = upper_quantile(zeta / 2.0) if side is Side.TWO_SIDED else upper_quantile(zeta)
    return IntervalResult(
        kind="unbiased", center=pair.tau0_hat, half_length_raw=c, half_length_scaled=c * pair.sigma0,
        bound_b=b, side=side.value, worst_case_t=0.0, scale=pair.sigma0, diagnostics={},
    )


def sensitivity_curve(kind, side, b_grid, pair: EstimatorPair, zeta: float = 0.05, alpha: float = 0.05,
                      tol: Tolerance = ROOT_TOL, include_unbiased: bool = True) -> list[IntervalResult]:
    """Intervals along an ascending grid of bias bounds.

    Each solve starts its bracket at the previous half-length, which is valid
    because worst-case coverage decreases in b. A failure at one grid point is
    recorded as a NaN row with ``diagnostics["error"]`` and the curve goes on.
    The constant unbiased interval is appended as one extra row per grid
    point when ``include_unbiased`` is set.
    """
    grid = [float(b) for b in b_grid]
    if any(b < 0 or not math.isfinite(b) for b in grid):
        raise DomainError("b_grid must be finite and nonnegative")
    if any(b2 < b1 for b1, b2 in zip(grid, grid[1:])):
        raise DomainError("b_grid must be sorted ascending")
    rows = []
    prev = 0.0
    for b in grid:
        try:
            r = confidence_interval(kind, pair, b, zeta, alpha, side, tol, lower_bracket=prev)
            prev = r.half_length_raw
        except (SolverError, BracketError) as exc:
            r = IntervalResult(kind=Kind.parse(kind).value, center=math.nan, half_length_raw=math.nan,
                               half_length_scaled=math.nan, bound_b=b, side=Side.parse(side).value,
                               worst_case_t=math.nan, diagnostics={"error": str(exc)})
        rows.append(r)
    if include_unbiased:
        rows.extend(unbiased_interval(pair, zeta, side, b) for b in grid)
    return rows


# ---------------------------------------------------------------------------
# Box searches shared by the vector and multi-source solvers


def _sign_vertices(b: np.ndarray) -> np.ndarray:
    """Vertices b * s of the box, one from each +-pair (first sign fixed at +)."""
    d = b.size
    signs = [(1.0,) + s for s in itertools.product((1.0, -1.0), repeat=d - 1)]
    return np.array(signs) * b


def _box_grid(b: np.ndarray, per_axis: int = 9, cap: int = 729, seed: int = 0) -> np.ndarray:
    """Search points in the box [-b, b] modulo the global sign flip: a full
    grid when it has at most ``cap`` points, otherwise a Latin hypercube."""
    d = b.size
    if per_axis**d <= cap:
        axes = [np.linspace(0.0, b[0], (per_axis + 1) // 2)] + [np.linspace(-bj, bj, per_axis) for bj in b[1:]]
        pts = np.array(list(itertools.product(*axes)))
    else:
        rng = np.random.default_rng(seed)
        u = (np.argsort(rng.random((cap, d)), axis=0) + rng.random((cap, d))) / cap
        pts = (2.0 * u - 1.0) * b
        pts[pts[:, 0] < 0] *= -1.0
    return pts


def _coordinate_refine(evaluate, t0: np.ndarray, b: np.ndarray, rounds: int = 3, n_line: int = 17):
    """Zooming line search along each coordinate in turn."""
    t = t0.copy()
    best = float(evaluate(t[None, :])[0])
    for r in range(rounds):
        for j in range(t.size):
            if b[j] == 0:
                continue
            half = b[j] / (4.0**r)
            lo, hi = max(-b[j], t[j] - half), min(b[j], t[j] + half)
            pts = np.repeat(t[None, :], n_line, axis=0)
            pts[:, j] = np.linspace(lo, hi, n_line)
            vals = evaluate(pts)
            i = int(np.argmin(vals))
            if vals[i] < best:
                best, t = float(vals[i]), pts[i].copy()
    return t, best


def _active_set_solve(make_eval, b: np.ndarray, target: float, lo: float, hi: float, tol: Tolerance,
                      max_rounds: int = 8, n_starts: int = 3):
    """Worst case over a box when coverage has no known monotonicity.

    Alternates between (i) solving for the length against the minimum over
    a finite active set of biases and (ii) searching the whole box at that
    length for a bias whose coverage is lower; the search hit is added to
    the active set until none falls below target by more than VIOLATION_TOL.

    ``make_eval(T, coarse)`` returns a callable L -> coverage at each row of T.
    """
    active = np.vstack([_sign_vertices(b), np.zeros((1, b.size))])
    search = _box_grid(b)
    history = []
    for rnd in range(max_rounds):
        ev = make_eval(active, False)
        L = _solve_length(lambda x: float(np.min(ev(x))), target, lo, hi, tol)
        coarse_at = lambda T: make_eval(T, True)(L)
        vals = coarse_at(search)
        starts = search[np.argsort(vals)[:n_starts]]
        cands = [_coordinate_refine(coarse_at, s, b)[0] for s in starts]
        exact = make_eval(np.array(cands), False)(L)
        i = int(np.argmin(exact))
        history.append({"round": rnd, "L": L, "search_min": float(exact[i])})
        if exact[i] >= target - VIOLATION_TOL:
            break
        active = np.vstack([active, cands[i]])
        lo = L
    else:
        raise SolverError(f"worst-case search did not settle in {max_rounds} rounds")
    cov = ev(L)
    j = int(np.argmin(cov))
    return L, active[j], {"rounds": history, "active_set_size": len(active), "coverage_at_worst": float(cov[j])}


# ---------------------------------------------------------------------------
# Vector setting


def region_radius(kind, b, zeta: float, problem: MultiProblem, tol: Tolerance = ROOT_TOL,
                  qmc: QmcConfig | None = None, n_grid: int = 512) -> RegionResult:
    """Radius M of the ellipsoid valid for all biases with |Sigma^{-1/2} Delta| <= b.

    PW: noncentral chi-squared quantile at the worst vertex. ST: root with the
    worst case over the box vertices. PT: root with the worst case searched
    over the whole box.
    """
    kind = Kind.parse(kind)
    _check_zeta(zeta)
    d = problem.d
    if d > MAX_DIM:
        raise DimensionError(f"dimension {d} exceeds the supported maximum {MAX_DIM}")
    b = _check_b(np.broadcast_to(np.asarray(b, float), (d,)).copy())
    target = 1.0 - zeta
    qmc = qmc or QmcConfig(dim=d)
    verts = _sign_vertices(b)
    lam = np.sum((verts @ (problem.whiten_pw @ problem.scale_root).T) ** 2, axis=1)
    M_pw = noncentral_chisq_quantile(target, d, float(lam.max()))
    center = point_multivariate(kind, problem)
    diag = {}
    if kind is Kind.PW:
        t_star = verts[int(np.argmax(lam))]
        M = M_pw
    else:
        hi = max(4.0 * M_pw, M_pw + 10.0)
        if kind is Kind.ST or not np.any(b > 0):
            ev = MultiCoverage(kind, problem, verts, qmc=qmc)
            M = _solve_length(lambda m: float(np.min(ev(m))), target, 0.0, hi, tol)
            cov = ev(M)
            t_star = verts[int(np.argmin(cov))]
            diag = {"coverage_at_worst": float(cov.min()), "qmc_stderr": ev.stderr.tolist()}
        elif d == 1:
            tmax = float(b[0])

            def worst(m):
                f = lambda t: MultiCoverage(kind, problem, np.asarray(t)[:, None], qmc=qmc)(m)
                return minimize_on_interval(f, 0.0, tmax, n_grid=n_grid, tol=1e-9)

            M = _solve_length(lambda m: worst(m)[1], target, 0.0, hi, tol)
            ts, cv = worst(M)
            t_star = np.array([ts])
            diag = {"coverage_at_worst": cv}
        else:
            coarse = QmcConfig(n_points=4096, seed=qmc.seed, dim=d)

            def make_eval(T, is_coarse):
                return MultiCoverage(kind, problem, T, qmc=coarse if is_coarse else qmc)

            M, t_star, diag = _active_set_solve(make_eval, b, target, 0.0, hi, tol)
    return RegionResult(kind=kind.value, center=center, M=M, metric=problem.precision, bound_b=b,
                        worst_case_t=np.asarray(t_star, float), diagnostics=diag)


# ---------------------------------------------------------------------------
# Multiple biased sources


def half_length_fusion(kind, b, zeta: float, problem: FusionProblem, alpha: float = 0.05,
                       tol: Tolerance = ROOT_TOL, n_grid: int = 512) -> IntervalResult:
    """Interval for the multi-source estimators valid when |Delta_j| <= b_j sigma0.

    PW is the folded-normal root at <gamma, b>. ST is solved at the vertex b.
    PT searches the whole box [-b, b] (modulo the global sign flip).
    """
    kind = Kind.parse(kind)
    _check_zeta(zeta)
    K = problem.K
    b = _check_b(np.broadcast_to(np.asarray(b, float), (K,)).copy())
    if kind is not Kind.PW and K > MAX_DIM:
        raise DimensionError(f"K = {K} exceeds the supported maximum {MAX_DIM}")
    g = problem.gammas
    G = g.sum()
    target = 1.0 - zeta
    shift = float(g @ b) / math.sqrt(1.0 + G)
    L_pw = find_root_monotone(lambda L: float(normal_prob(shift - L, shift + L)) - target, 0.0,
                              upper_quantile(zeta / 2.0) + shift + 1.0, Tolerance(1e-13, tol.max_iter))
    diag = {}
    if kind is Kind.PW:
        L, t_star = L_pw, b
    else:
        hi = L_pw + math.sqrt(G) * (upper_quantile(alpha / 2.0) + 10.0)
        if kind is Kind.ST or not np.any(b > 0):
            ev = FusionCoverage(kind, problem, b, alpha)
            L = _solve_length(lambda x: float(ev(x)[0]), target, 0.0, hi, tol)
            t_star = b
            diag = {"coverage_at_worst": float(ev(L)[0])}
        elif K == 1:
            tmax = min(float(b[0]), saturation_bias(float(g[0]), alpha))

            def worst(L):
                f = lambda t: FusionCoverage(kind, problem, np.asarray(t)[:, None], alpha)(L)
                return minimize_on_interval(f, 0.0, tmax, n_grid=n_grid, tol=1e-9)

            L = _solve_length(lambda x: worst(x)[1], target, 0.0, hi, tol)
            ts, cv = worst(L)
            t_star = np.array([ts])
            diag = {"coverage_at_worst": cv}
        else:
            def make_eval(T, is_coarse):
                return FusionCoverage(kind, problem, T, alpha, nodes=10 if is_coarse else None)

            L, t_star, diag = _active_set_solve(make_eval, b, target, 0.0, hi, tol)
    return IntervalResult(
        kind=kind.value, center=point_fusion(kind, problem, alpha), half_length_raw=L,
        half_length_scaled=L * problem.scale, bound_b=b, side=Side.TWO_SIDED.value,
        worst_case_t=np.asarray(t_star, float), scale=problem.scale, diagnostics=diag,
    )
