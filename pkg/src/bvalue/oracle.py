"""Monte Carlo verification engine.

Simulates the Gaussian models directly (and, for the single pair, through
the conditional-mixture representation of the estimation error) and counts
how often the interval or ellipsoid covers the truth. The estimator formulas
are re-implemented here on purpose so that a transcription error in the
library cannot cancel out.

Random numbers come from Philox keyed by (seed, chunk index), so estimates
do not depend on how the draws are split up.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

from .errors import DomainError
from .estimators import EstimatorPair, FusionProblem, Kind, MultiProblem

CHUNK = 1 << 16


@dataclass(frozen=True)
class McConfig:
    n_draws: int = 200_000
    seed: int = 0
    antithetic: bool = True

    def __post_init__(self):
        if self.n_draws < 1000:
            raise DomainError(f"n_draws must be at least 1000, got {self.n_draws}")
        if self.antithetic and self.n_draws % 2:
            raise DomainError("n_draws must be even with antithetic draws")
        if not 0 <= self.seed < 2**64:
            raise DomainError("seed must fit in 64 unsigned bits")


def _normals(cfg: McConfig, dim: int):
    """Yield (n, dim) standard normal blocks; with antithetic draws each block
    is [Z; -Z]."""
    base = cfg.n_draws // 2 if cfg.antithetic else cfg.n_draws
    done = 0
    i = 0
    while done < base:
        m = min(CHUNK, base - done)
        gen = np.random.Generator(np.random.Philox(key=np.array([cfg.seed, i], dtype=np.uint64)))
        z = gen.standard_normal((m, dim))
        yield np.concatenate([z, -z]) if cfg.antithetic else z
        done += m
        i += 1


def _summarize(hits: list[np.ndarray], cfg: McConfig):
    """Coverage and its standard error. With antithetic draws the error is
    computed from pair means, since the two halves of a pair are dependent."""
    if cfg.antithetic:
        pairs = np.concatenate([0.5 * (h[: h.size // 2] + h[h.size // 2:]) for h in hits])
        p = float(pairs.mean())
        se = float(pairs.std(ddof=1) / math.sqrt(pairs.size))
    else:
        allh = np.concatenate(hits)
        p = float(allh.mean())
        se = math.sqrt(max(p * (1.0 - p), 0.0) / allh.size)
    return p, max(se, 1.0 / cfg.n_draws)


def _threshold(kind: Kind, base, diff, step_weight, thr):
    """Shared PT/ST rule: base + w * diff on acceptance; on rejection base
    (PT) or base + w * thr * sign(diff) (ST)."""
    acc = np.abs(diff) <= thr
    if kind is Kind.PW:
        return base + step_weight * diff
    if kind is Kind.PT:
        return np.where(acc, base + step_weight * diff, base)
    return np.where(acc, base + step_weight * diff, base + step_weight * thr * np.sign(diff))


def _univariate_errors(kind, pair: EstimatorPair, delta: float, alpha: float, z: np.ndarray, method: str):
    """Estimation errors tau_hat - tau (truth 0) for a block of normals."""
    s0, s1, rho = math.sqrt(pair.sigma0_sq), math.sqrt(pair.sigma1_sq), pair.rho
    c = -float(ndtri(alpha / 2.0))
    kap = rho * s1 / s0
    # decorrelated second estimator (identity when rho = 0)
    v1 = (1.0 - rho**2) * pair.sigma1_sq / (1.0 - kap) ** 2
    d1 = delta / (1.0 - kap)
    gam = pair.sigma0_sq / v1
    if method == "direct":
        t0 = s0 * z[:, 0]
        t1 = delta + s1 * (rho * z[:, 0] + math.sqrt(max(1.0 - rho**2, 0.0)) * z[:, 1])
        t1p = (t1 - kap * t0) / (1.0 - kap)
        diff = t1p - t0
        thr = math.sqrt(pair.sigma0_sq + v1) * c
        return _threshold(kind, t0, diff, gam / (1.0 + gam), thr)
    if method == "mixture":
        # error = sigma0 / sqrt(1+g) Z1 + g/(1+g) Delta' 1(acc) - s sigma0 (Z2 - shift) 1(rej)
        s = math.sqrt(gam / (1.0 + gam))
        t = d1 / s0
        z1, z2 = z[:, 0], z[:, 1]
        rej = np.abs(z2 + s * t) > c
        head = s0 / math.sqrt(1.0 + gam) * z1
        if kind is Kind.PW:
            return head + gam / (1.0 + gam) * d1
        shift = c * np.sign(z2 + s * t) if kind is Kind.ST else 0.0
        return head + np.where(rej, -s * s0 * (z2 - shift), gam / (1.0 + gam) * d1)
    raise DomainError(f"unknown method {method!r}")


def _multivariate_errors(kind, problem: MultiProblem, delta: np.ndarray, z: np.ndarray):
    d = problem.d
    S0, S1 = problem.Sigma0, problem.Sigma1
    L0, L1 = np.linalg.cholesky(S0), np.linalg.cholesky(S1)
    t0 = z[:, :d] @ L0.T
    t1 = delta + z[:, d:] @ L1.T
    diff = t1 - t0
    # A = (S0^-1 + S1^-1)^-1 S1^-1 = S0 (S0 + S1)^-1
    A = S0 @ np.linalg.inv(S0 + S1)
    step = diff @ A.T
    r = np.einsum("ij,jk,ik->i", diff, np.linalg.inv(S0 + S1), diff)
    if kind is Kind.PW:
        return t0 + step
    if kind is Kind.PT:
        return np.where((r <= problem.q)[:, None], t0 + step, t0)
    return t0 + problem.shrinkage(r)[:, None] * step


def _fusion_errors(kind, problem: FusionProblem, delta: np.ndarray, alpha: float, z: np.ndarray):
    s0 = math.sqrt(problem.sigma0_sq)
    sj = np.sqrt(np.array([v for _, v in problem.biased]))
    c = -float(ndtri(alpha / 2.0))
    t0 = s0 * z[:, 0]
    tj = delta + sj * z[:, 1:]
    gam = problem.sigma0_sq / sj**2
    w = gam / (1.0 + gam.sum())
    diff = tj - t0[:, None]
    thr = np.sqrt(problem.sigma0_sq + sj**2) * c
    step = _threshold(kind, np.zeros_like(diff), diff, 1.0, thr)
    return t0 + step @ w


def mc_coverage(kind, setting: str, delta, params, interval_or_region, cfg: McConfig = McConfig(),
                method: str = "direct", side: str = "two_sided", alpha: float = 0.05):
    """Empirical coverage of a solved interval or ellipsoid at bias ``delta``.

    setting "univariate": ``params`` an EstimatorPair (possibly correlated),
    ``delta`` the bias of tau1_hat, ``interval_or_region`` an IntervalResult
    or its scaled half-length. setting "multivariate": ``params`` a
    MultiProblem, ``delta`` the bias vector, the region a RegionResult or the
    radius M. setting "fusion": ``params`` a FusionProblem, ``delta`` the
    K-vector of biases. ``method="mixture"`` (univariate only) samples the
    conditional-mixture representation instead of the raw estimators.

    Returns (coverage, stderr).
    """
    kind = Kind.parse(kind)
    hits = []
    if setting == "univariate":
        if not isinstance(params, EstimatorPair):
            raise DomainError("univariate setting needs an EstimatorPair")
        h = getattr(interval_or_region, "half_length_scaled", interval_or_region)
        for z in _normals(cfg, 2):
            e = _univariate_errors(kind, params, float(delta), alpha, z, method)
            hits.append(_side_hit(e, float(h), side))
    elif setting == "multivariate":
        if not isinstance(params, MultiProblem) or method != "direct":
            raise DomainError("multivariate setting needs a MultiProblem and method 'direct'")
        M = getattr(interval_or_region, "M", interval_or_region)
        delta = np.broadcast_to(np.asarray(delta, float), (params.d,))
        P = params.precision
        for z in _normals(cfg, 2 * params.d):
            e = _multivariate_errors(kind, params, delta, z)
            hits.append((np.einsum("ij,jk,ik->i", e, P, e) <= float(M)).astype(float))
    elif setting == "fusion":
        if not isinstance(params, FusionProblem) or method != "direct":
            raise DomainError("fusion setting needs a FusionProblem and method 'direct'")
        h = getattr(interval_or_region, "half_length_scaled", interval_or_region)
        delta = np.broadcast_to(np.asarray(delta, float), (params.K,))
        for z in _normals(cfg, 1 + params.K):
            e = _fusion_errors(kind, params, delta, alpha, z)
            hits.append(_side_hit(e, float(h), side))
    else:
        raise DomainError(f"unknown setting {setting!r}")
    return _summarize(hits, cfg)


def _side_hit(err: np.ndarray, h: float, side: str) -> np.ndarray:
    if side == "two_sided":
        return (np.abs(err) <= h).astype(float)
    if side == "lower":
        return (err <= h).astype(float)
    if side == "upper":
        return (err >= -h).astype(float)
    raise DomainError(f"unknown side {side!r}")


# ---------------------------------------------------------------------------
# Quantiles


@dataclass(frozen=True)
class FoldedNormal:
    """|N(a, 1)|."""

    a: float


@dataclass(frozen=True)
class NoncentralChiSq:
    d: int
    lam: float


@dataclass(frozen=True)
class EstimatorAbsError:
    """|tau_hat - tau| / scale for one estimator kind at bias ``delta``,
    with scale the standard deviation of the precision-weighted estimator."""

    kind: str
    pair: EstimatorPair
    delta: float
    alpha: float = 0.05


def mc_quantile(dist, p: float, cfg: McConfig = McConfig()) -> float:
    """Empirical p-quantile of ``n_draws`` samples from ``dist``."""
    if not 0.0 < p < 1.0:
        raise DomainError(f"p must lie in (0, 1), got {p}")
    samples = []
    if isinstance(dist, FoldedNormal):
        for z in _normals(cfg, 1):
            samples.append(np.abs(dist.a + z[:, 0]))
    elif isinstance(dist, NoncentralChiSq):
        mu = np.zeros(dist.d)
        mu[0] = math.sqrt(dist.lam)
        for z in _normals(cfg, dist.d):
            samples.append(np.sum((z + mu) ** 2, axis=1))
    elif isinstance(dist, EstimatorAbsError):
        pr = dist.pair
        kap = pr.rho * math.sqrt(pr.sigma1_sq / pr.sigma0_sq)
        v1 = (1.0 - pr.rho**2) * pr.sigma1_sq / (1.0 - kap) ** 2
        scale = math.sqrt(pr.sigma0_sq / (1.0 + pr.sigma0_sq / v1))
        for z in _normals(cfg, 2):
            e = _univariate_errors(Kind.parse(dist.kind), pr, dist.delta, dist.alpha, z, "direct")
            samples.append(np.abs(e) / scale)
    else:
        raise DomainError(f"unsupported distribution {dist!r}")
    return float(np.quantile(np.concatenate(samples), p))
