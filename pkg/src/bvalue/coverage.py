"""Exact coverage probabilities of the fixed-length intervals and ellipsoids
built around each combined estimator.

Lengths are standardized: a half-length ``L`` means the interval
``estimate +- L * scale`` with ``scale`` the standard deviation of the
precision-weighted estimator. Biases are relative, ``t = Delta / sigma0``
(or ``Sigma^{-1/2} Delta`` for vectors).
"""

from __future__ import annotations

import math
import warnings
from enum import Enum

import numpy as np
from .errors import AccuracyWarning, DimensionError, DomainError
from .estimators import FusionProblem, Kind, MultiProblem
from .numerics import (
    QUAD_TOL,
    QmcConfig,
    TRUNCATION,
    integrate_batch,
    noncentral_chisq_cdf,
    normal_prob,
    qmc_normal_points,
    std_normal_cdf,
    upper_quantile,
)

MAX_FUSION_SOURCES = 8
QMC_WARN_STDERR = 1e-3


class Side(str, Enum):
    TWO_SIDED = "two_sided"
    LOWER = "lower"
    UPPER = "upper"

    @classmethod
    def parse(cls, side) -> "Side":
        if isinstance(side, cls):
            return side
        try:
            return cls(str(side).lower())
        except ValueError:
            raise DomainError(f"unknown side {side!r}") from None


def _consts(gamma: float, alpha: float | None):
    if not gamma > 0:
        raise DomainError(f"gamma must be positive, got {gamma}")
    s = math.sqrt(gamma / (1.0 + gamma))
    k = gamma / math.sqrt(1.0 + gamma)
    c = None
    if alpha is not None:
        if not 0.0 < alpha < 1.0:
            raise DomainError(f"alpha must lie in (0, 1), got {alpha}")
        c = upper_quantile(alpha / 2.0)
    return s, k, c


def _window(mean, L, two_sided: bool):
    """Probability that N(mean, 1) falls in [-L, L] (or below L)."""
    if two_sided:
        return normal_prob(mean - L, mean + L)
    return std_normal_cdf(L - mean)


def _out(x, *inputs):
    if all(np.ndim(v) == 0 for v in inputs):
        return float(np.asarray(x).reshape(-1)[0])
    return x


# ---------------------------------------------------------------------------
# Single pair


def coverage_pw(L, t, gamma: float):
    """Two-sided coverage of the precision-weighted interval at relative bias t."""
    _, k, _ = _consts(gamma, None)
    L_, t_ = np.broadcast_arrays(np.asarray(L, float), np.asarray(t, float))
    return _out(_window(k * t_, L_, True), L, t)


def _threshold_coverage(L, t, gamma, alpha, soft: bool, two_sided: bool, tol: float):
    """Coverage of the pretest-type intervals.

    With u the standardized pretest statistic, the error is N(k t, 1) when
    |u + s t| <= c and -sqrt(gamma) (u + shift) + N(0, 1) otherwise, where
    the soft-threshold shift is +c in the lower tail and -c in the upper one.
    The value is written as the |t| -> infinity limit (the tail on the side
    of t covering all of u) plus the integral of the difference over the
    other two pieces. That remainder is small and accurate to relative
    precision, so the shape in t survives rounding far out in the tail.
    """
    s, k, c = _consts(gamma, alpha)
    L_, t_ = np.broadcast_arrays(np.asarray(L, float), np.asarray(t, float))
    Lf = L_.ravel()
    tf = np.abs(t_.ravel()) if two_sided else t_.ravel()
    n = Lf.size
    rg = math.sqrt(gamma)
    r = math.sqrt(1.0 + gamma)
    up = tf >= 0.0
    sh_low, sh_up = (c, -c) if soft else (0.0, 0.0)
    sh_dom = np.where(up, sh_up, sh_low)
    # limit: u ~ N(0, 1) entirely in the dominant tail, error ~ N(-sqrt(gamma) shift, 1 + gamma)
    m = -rg * sh_dom / r
    limit = _window(m, Lf / r, two_sided)
    acc_win = _window(k * tf, Lf, two_sided)
    a_lo, a_hi = -c - s * tf, c - s * tf

    def dom_win(u, idx):
        return _window(-rg * (u + sh_dom[idx]), Lf[idx], two_sided)

    def f_acc(u, idx):
        return acc_win[idx] - dom_win(u, idx)

    total = limit + integrate_batch(f_acc, a_lo, a_hi, tol=0.5 * tol)
    if soft:
        # the tail opposite to t carries the other shift
        o_lo = np.where(up, -np.inf, a_hi)
        o_hi = np.where(up, a_lo, np.inf)
        sh_other = np.where(up, sh_low, sh_up)

        def f_other(u, idx):
            return _window(-rg * (u + sh_other[idx]), Lf[idx], two_sided) - dom_win(u, idx)

        total = total + integrate_batch(f_other, o_lo, o_hi, tol=0.5 * tol)
    return _out(np.clip(total, 0.0, 1.0).reshape(L_.shape), L, t)


def coverage_pt(L, t, gamma: float, alpha: float, tol: float = QUAD_TOL.abs_tol):
    """Two-sided coverage of the pretest interval; broadcasts over L and t."""
    return _threshold_coverage(L, t, gamma, alpha, soft=False, two_sided=True, tol=tol)


def coverage_st(L, t, gamma: float, alpha: float, tol: float = QUAD_TOL.abs_tol):
    """Two-sided coverage of the soft-threshold interval; broadcasts over L and t."""
    return _threshold_coverage(L, t, gamma, alpha, soft=True, two_sided=True, tol=tol)


def coverage_one_sided(kind, L, t, gamma: float, alpha: float = 0.05, side="lower", tol: float = QUAD_TOL.abs_tol):
    """Coverage of the lower bound ``estimate - L * scale`` (side="lower").

    The upper bound ``estimate + L * scale`` is handled through the sign-flip
    identity: its coverage at bias t equals the lower-bound coverage at -t.
    """
    kind = Kind.parse(kind)
    side = Side.parse(side)
    if side is Side.TWO_SIDED:
        raise DomainError("coverage_one_sided needs side 'lower' or 'upper'")
    t = np.asarray(t, float)
    tt = -t if side is Side.UPPER else t
    if kind is Kind.PW:
        _, k, _ = _consts(gamma, None)
        L_, t_ = np.broadcast_arrays(np.asarray(L, float), tt)
        return _out(_window(k * t_, L_, False), L, t)
    return _threshold_coverage(L, tt, gamma, alpha, soft=kind is Kind.ST, two_sided=False, tol=tol)


def coverage(kind, L, t, gamma: float, alpha: float = 0.05, side="two_sided", tol: float = QUAD_TOL.abs_tol):
    """Dispatch on estimator kind and sidedness."""
    kind = Kind.parse(kind)
    side = Side.parse(side)
    if side is not Side.TWO_SIDED:
        return coverage_one_sided(kind, L, t, gamma, alpha, side, tol)
    if kind is Kind.PW:
        return coverage_pw(L, t, gamma)
    if kind is Kind.PT:
        return coverage_pt(L, t, gamma, alpha, tol)
    return coverage_st(L, t, gamma, alpha, tol)


def coverage_limit(kind, L, gamma: float, alpha: float = 0.05, side="two_sided"):
    """Coverage as |t| -> infinity (the pretest rejects with probability one).

    PW coverage tends to 0. For lower bounds the limit is taken along
    t -> +infinity, the direction that pushes the estimate up.
    """
    kind = Kind.parse(kind)
    side = Side.parse(side)
    _, _, c = _consts(gamma, alpha)
    L_ = np.asarray(L, float)
    if kind is Kind.PW:
        return _out(np.zeros_like(L_), L)
    r = math.sqrt(1.0 + gamma)
    shift = 0.0 if kind is Kind.PT else math.sqrt(gamma) * c
    if side is Side.TWO_SIDED:
        val = normal_prob((-L_ - shift) / r, (L_ - shift) / r)
    else:
        val = std_normal_cdf((L_ - shift) / r)
    return _out(val, L)


def saturation_bias(gamma: float, alpha: float) -> float:
    """|t| beyond which the accept probability is below the quadrature
    truncation mass, so threshold coverages equal their limits."""
    s, _, c = _consts(gamma, alpha)
    return (c + TRUNCATION) / s


# ---------------------------------------------------------------------------
# Vector setting


class MultiCoverage:
    """Coverage of the ellipsoid ``(est - tau)' P (est - tau) <= M`` at a
    fixed set of scaled biases, as a function of M.

    The noncentralities are computed once per bias; evaluating at many M is
    then cheap, and with fixed quasi-random points the result is a smooth
    deterministic function of M (what the radius solvers need).
    """

    def __init__(self, kind, problem: MultiProblem, t, qmc: QmcConfig | None = None, tol: float = QUAD_TOL.abs_tol):
        self.kind = Kind.parse(kind)
        self.problem = problem
        d = problem.d
        t = np.atleast_2d(np.asarray(t, float))
        if t.shape[1] != d:
            raise DomainError(f"bias must have {d} components, got {t.shape[1]}")
        self.t = t
        self.tol = tol
        self.stderr = np.zeros(len(t))
        bias = t @ (problem.whiten_pw @ problem.scale_root).T
        self.lam_pw = np.sum(bias * bias, axis=1)
        if self.kind is Kind.PW:
            return
        mean_u = t @ (problem.diff_root_inv @ problem.scale_root).T
        self.accept = noncentral_chisq_cdf(problem.q, d, np.sum(mean_u * mean_u, axis=1))
        if d == 1:
            self._setup_1d(mean_u[:, 0])
        else:
            self._setup_qmc(mean_u, qmc or QmcConfig(dim=d))

    def _reject_noncentrality(self, u, st):
        """Squared norm of B (S t - (1 - h) W^{1/2} u) for rows of u."""
        p = self.problem
        if self.kind is Kind.PT:
            keep = np.ones(len(u))
        else:
            keep = 1.0 - p.shrinkage(np.sum(u * u, axis=1))
        v = st - keep[:, None] * (u @ p.diff_root.T)
        w = v @ p.whiten_pw.T
        return np.sum(w * w, axis=1)

    def _setup_1d(self, m):
        p = self.problem
        rq = math.sqrt(p.q)
        n = m.size
        st = self.t @ p.scale_root.T
        self._lo = np.concatenate([np.full(n, -np.inf), rq - m])
        self._hi = np.concatenate([-rq - m, np.full(n, np.inf)])
        self._m = np.concatenate([m, m])
        self._st = np.concatenate([st, st])

    def _setup_qmc(self, mean_u, cfg: QmcConfig):
        if cfg.dim != self.problem.d:
            raise DomainError(f"QMC dimension {cfg.dim} != problem dimension {self.problem.d}")
        st = self.t @ self.problem.scale_root.T
        self._reps = []
        for z in qmc_normal_points(cfg):
            per_t = []
            for i in range(len(self.t)):
                u = z + mean_u[i]
                out = np.sum(u * u, axis=1) > self.problem.q
                per_t.append(self._reject_noncentrality(u[out], st[i]))
            self._reps.append((z.shape[0], per_t))

    def __call__(self, M) -> np.ndarray:
        """Coverage at radius M for every stored bias."""
        if M < 0:
            raise DomainError(f"M must be nonnegative, got {M}")
        d = self.problem.d
        pw = noncentral_chisq_cdf(M, d, self.lam_pw)
        if self.kind is Kind.PW:
            return pw
        head = pw * self.accept
        if d == 1:
            n = len(self.t)

            def f(z, idx):
                u = (z + self._m[idx])[:, None]
                lam = self._reject_noncentrality(u, self._st[idx])
                return noncentral_chisq_cdf(M, 1, lam)

            tails = integrate_batch(f, self._lo, self._hi, tol=0.5 * self.tol)
            return np.clip(head + tails[:n] + tails[n:], 0.0, 1.0)
        # the reject mass 1 - accept is known exactly, so only the uncovered
        # part of the rejection region is estimated
        est = []
        for npts, per_t in self._reps:
            miss = [(1.0 - noncentral_chisq_cdf(M, d, lam)).sum() / npts for lam in per_t]
            est.append(1.0 - self.accept - np.array(miss))
        est = np.array(est)
        self.stderr = est.std(axis=0, ddof=1) / math.sqrt(est.shape[0])
        return np.clip(head + est.mean(axis=0), 0.0, 1.0)


def coverage_multivariate(kind, M: float, t, problem: MultiProblem, qmc: QmcConfig | None = None, tol: float = QUAD_TOL.abs_tol):
    """Coverage of the ellipsoid of radius M at scaled bias t.

    Returns a float for a single bias vector, an array for a stack of them.
    Issues an :class:`AccuracyWarning` when the quasi Monte Carlo standard
    error of the rejection-region integral exceeds 1e-3.
    """
    t_arr = np.asarray(t, float)
    ev = MultiCoverage(kind, problem, t_arr, qmc=qmc, tol=tol)
    val = ev(M)
    if np.any(ev.stderr > QMC_WARN_STDERR):
        warnings.warn(f"QMC standard error {ev.stderr.max():.2e} exceeds {QMC_WARN_STDERR}", AccuracyWarning, stacklevel=2)
    return float(val[0]) if t_arr.ndim <= 1 else val


# ---------------------------------------------------------------------------
# Multiple biased sources

_HERMITE_NODES = {2: 24, 3: 14}


class FusionCoverage:
    """Coverage of ``estimate +- L * scale`` for K biased sources at a fixed
    stack of relative-bias vectors, as a function of L.

    The standardized pretest statistics are u ~ N(t, V) with
    V = 1 1' + diag(1/gamma). Writing u = t + w 1 + eta (w shared, eta_j
    independent N(0, 1/gamma_j)), the integral over w is done by adaptive
    quadrature split at every threshold crossing, and the outer integral over
    eta by tensor Gauss-Hermite (K <= 3) or scrambled Sobol points (K > 3).
    ``nodes`` overrides the Gauss-Hermite order (and caps the Sobol count at
    1024), for cheap coarse searches.
    """

    def __init__(self, kind, problem: FusionProblem, t, alpha: float = 0.05, side="two_sided",
                 tol: float = QUAD_TOL.abs_tol, qmc_points: int = 4096, seed: int = 0, nodes: int | None = None):
        self.kind = Kind.parse(kind)
        self.side = Side.parse(side)
        K = problem.K
        if K > MAX_FUSION_SOURCES and self.kind is not Kind.PW:
            raise DimensionError(f"K = {K} biased sources exceeds the supported maximum {MAX_FUSION_SOURCES}")
        t = np.atleast_2d(np.asarray(t, float))
        if t.shape[1] != K:
            raise DomainError(f"bias must have {K} components, got {t.shape[1]}")
        if self.side is Side.UPPER:
            t = -t
        self.t = t
        self.tol = tol
        g = problem.gammas
        self.gammas = g
        self.root = math.sqrt(1.0 + g.sum())
        self.bias_pw = t @ g / self.root
        if self.kind is Kind.PW:
            return
        self.thr = problem.thresholds(alpha)
        if K == 1:
            # u is scalar N(t, 1 + 1/gamma): no outer integral needed
            eta = np.zeros((1, 1))
            wts = np.ones(1)
            self.wscale = math.sqrt(1.0 + 1.0 / g[0])
        elif K <= 3:
            x, w = np.polynomial.hermite_e.hermegauss(nodes or _HERMITE_NODES[K])
            w = w / math.sqrt(2.0 * math.pi)
            grids = np.meshgrid(*([x] * K), indexing="ij")
            eta = np.stack([gr.ravel() for gr in grids], axis=1) / np.sqrt(g)
            wts = np.prod(np.stack(np.meshgrid(*([w] * K), indexing="ij"), axis=0).reshape(K, -1), axis=0)
            self.wscale = 1.0
        else:
            n = qmc_points if nodes is None else min(qmc_points, 1024)
            cfg = QmcConfig(n_points=n, seed=seed, dim=K)
            eta = np.concatenate(qmc_normal_points(cfg)) / np.sqrt(g)
            wts = np.full(len(eta), 1.0 / len(eta))
            self.wscale = 1.0
        self._build(eta, wts)

    def _build(self, eta, wts):
        # one inner integral per (bias, eta node, piece between kinks)
        nt, ne, K = len(self.t), len(eta), self.t.shape[1]
        base = (self.t[:, None, :] + eta[None, :, :]).reshape(-1, K)  # u = base + wscale * w
        weight = np.tile(wts, nt)
        kinks = np.concatenate([(self.thr - base), (-self.thr - base)], axis=1) / self.wscale
        kinks = np.clip(np.sort(kinks, axis=1), -TRUNCATION, TRUNCATION)
        edges = np.concatenate([np.full((len(base), 1), -TRUNCATION), kinks, np.full((len(base), 1), TRUNCATION)], axis=1)
        lo = edges[:, :-1].ravel()
        hi = edges[:, 1:].ravel()
        keep = hi > lo
        owner = np.repeat(np.arange(len(base)), edges.shape[1] - 1)[keep]
        self._lo, self._hi, self._owner = lo[keep], hi[keep], owner
        self._base = base
        self._weight = weight
        self._bias_owner = np.repeat(np.arange(nt), ne)

    def _mean(self, u):
        """Standardized mean of the estimation error given pretest statistics u."""
        a = np.abs(u) > self.thr
        if self.kind is Kind.PT:
            up = np.where(a, u, 0.0)
        else:
            up = np.where(a, u - self.thr * np.sign(u), 0.0)
        return up

    def __call__(self, L) -> np.ndarray:
        if L < 0:
            raise DomainError(f"L must be nonnegative, got {L}")
        two = self.side is Side.TWO_SIDED
        if self.kind is Kind.PW:
            return np.asarray(_window(self.bias_pw, L, two), float)
        g, root = self.gammas, self.root
        base, owner = self._base, self._owner
        tvec = self.t[self._bias_owner]

        def f(w, idx):
            node = owner[idx]
            u = base[node] + self.wscale * w[:, None]
            m = np.sum(g * (tvec[node] - self._mean(u)), axis=1) / root
            return _window(m, L, two)

        pieces = integrate_batch(f, self._lo, self._hi, tol=self.tol, panel_width=4.0)
        per_node = np.bincount(owner, weights=pieces, minlength=len(base))
        per_bias = np.bincount(self._bias_owner, weights=per_node * self._weight, minlength=len(self.t))
        return np.clip(per_bias, 0.0, 1.0)


def coverage_fusion(kind, L: float, t, problem: FusionProblem, alpha: float = 0.05, side="two_sided",
                    tol: float = QUAD_TOL.abs_tol):
    """Coverage of the multi-source interval at relative-bias vector t."""
    t_arr = np.asarray(t, float)
    val = FusionCoverage(kind, problem, t_arr, alpha=alpha, side=side, tol=tol)(L)
    return float(val[0]) if t_arr.ndim <= 1 else val

