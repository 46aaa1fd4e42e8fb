"""Numerical primitives: normal and noncentral chi-squared distributions,
Gaussian-weighted quadrature, monotone root finding, interval minimization
and scrambled Sobol integration.

Everything here is a pure function of its arguments.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import optimize, special
from scipy.stats import qmc

from .errors import BracketError, DomainError, IntegrationError

# |u| beyond this carries Gaussian mass < 1e-16
TRUNCATION = 8.5

_SQRT_2PI = math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class Tolerance:
    abs_tol: float = 1e-10
    max_iter: int = 200

    def __post_init__(self):
        if not self.abs_tol > 0:
            raise DomainError(f"abs_tol must be positive, got {self.abs_tol}")
        if self.max_iter < 1:
            raise DomainError(f"max_iter must be >= 1, got {self.max_iter}")


ROOT_TOL = Tolerance(abs_tol=1e-8)
QUAD_TOL = Tolerance(abs_tol=1e-10, max_iter=60)


@dataclass(frozen=True)
class QmcConfig:
    """Scrambled Sobol settings. ``n_points`` is the total over all replicates.

    With ``symmetric`` each replicate is closed under coordinate sign flips
    (and, for dim <= 2, coordinate swaps), so estimates inherit the
    symmetries of the integrand exactly.
    """

    n_points: int = 65536
    seed: int = 0
    dim: int = 1
    replicates: int = 8
    symmetric: bool = True

    def __post_init__(self):
        n = self.n_points
        if n < 1 or n & (n - 1):
            raise DomainError(f"n_points must be a power of two, got {n}")
        if self.dim < 1:
            raise DomainError(f"dim must be >= 1, got {self.dim}")
        if self.replicates < 2 or n % self.replicates:
            raise DomainError("replicates must be >= 2 and divide n_points")
        if self.symmetric and n // self.replicates < symmetry_group(self.dim).shape[0]:
            raise DomainError("too few points per replicate for the symmetrized point set")


# ---------------------------------------------------------------------------
# Standard normal


def std_normal_cdf(x):
    """Standard normal CDF. Accepts scalars or arrays; NaN propagates."""
    return special.ndtr(x)


def std_normal_pdf(x):
    x = np.asarray(x, dtype=float)
    return np.exp(-0.5 * x * x) / _SQRT_2PI


def std_normal_quantile(p):
    """Inverse of :func:`std_normal_cdf` on the open unit interval."""
    arr = np.asarray(p, dtype=float)
    if np.any(~((arr > 0.0) & (arr < 1.0))):
        raise DomainError(f"probability must lie in (0, 1), got {p}")
    return special.ndtri(p)


def upper_quantile(a: float) -> float:
    """c_a: the point with upper-tail mass ``a`` under N(0, 1)."""
    return float(-std_normal_quantile(a))


def normal_prob(lo, hi):
    """P(lo <= Z <= hi) for Z ~ N(0,1), computed on whichever tail keeps
    precision. Broadcasts; returns 0 where hi < lo."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    right = lo > 0
    out = np.where(right, special.ndtr(-lo) - special.ndtr(-hi), special.ndtr(hi) - special.ndtr(lo))
    return np.maximum(out, 0.0)


# ---------------------------------------------------------------------------
# Noncentral chi-squared

_SERIES_RESIDUAL = 1e-13
_CHUNK = 4096
_CELLS = 4_000_000


def _ncx2_series(x: np.ndarray, d: int, lam: np.ndarray) -> np.ndarray:
    """Poisson mixture of central chi-squared CDFs.

    Points are sorted by noncentrality and processed in chunks; each chunk
    sums over the Poisson indices from its smallest mode minus a margin to
    its largest mode plus a margin, the margin doubling until the neglected
    weight is < 1e-13 for every point. When all ``x`` are equal the central
    CDF terms depend only on the index and are computed once per chunk.
    """
    out = np.empty_like(x)
    order = np.argsort(lam, kind="stable")
    xs_all, mu_all = x[order], 0.5 * lam[order]
    scalar_x = xs_all.size > 0 and xs_all[0] == xs_all[-1] and np.all(xs_all == xs_all[0])
    start = 0
    while start < x.size:
        # keep chunk rows times window width bounded
        width = 16.0 * math.sqrt(float(mu_all[min(start + _CHUNK, x.size) - 1])) + 41.0
        size = max(16, min(_CHUNK, int(_CELLS / width)))
        stop = start + size
        xs = xs_all[start:stop]
        mu = mu_all[start:stop]
        half = int(math.ceil(8.0 * math.sqrt(float(mu[-1])) + 20))
        while True:
            k0 = max(0, int(math.floor(mu[0])) - half)
            k = np.arange(k0, int(math.floor(mu[-1])) + half + 1, dtype=float)
            with np.errstate(divide="ignore", invalid="ignore"):
                logw = -mu[:, None] + k[None, :] * np.log(mu[:, None]) - special.gammaln(k + 1.0)[None, :]
            zero = mu == 0.0
            if np.any(zero):
                logw[zero] = np.where(k == 0, 0.0, -np.inf)
            w = np.exp(logw)
            # beyond the window Poisson weights decay at least geometrically,
            # which bounds the neglected mass by the edge weights
            with np.errstate(divide="ignore"):
                upper = w[:, -1] / np.maximum(1.0 - mu / (k[-1] + 2.0), 1e-300)
                lower = 0.0 if k0 == 0 else w[:, 0] / np.maximum(1.0 - k0 / np.maximum(mu, 1e-300), 1e-300)
            if np.all(upper + lower < _SERIES_RESIDUAL) or half > 10**5:
                break
            half *= 2
        if scalar_x:
            terms = special.gammainc(0.5 * d + k, 0.5 * xs[0])
            out[start:stop] = w @ terms
        else:
            terms = special.gammainc(0.5 * d + k[None, :], 0.5 * xs[:, None])
            out[start:stop] = np.sum(w * terms, axis=1)
        start = stop
    res = np.empty_like(out)
    res[order] = out
    return res


def noncentral_chisq_cdf(x, d: int, lam, method: str = "auto"):
    """Psi_d(x; lam), CDF of the squared norm of N(mu, I_d) with |mu|^2 = lam.

    ``method="series"`` forces the Poisson-weighted series. ``"auto"`` uses the
    exact normal representation when d == 1 and the series otherwise.
    """
    if d < 1 or int(d) != d:
        raise DomainError(f"degrees of freedom must be a positive integer, got {d}")
    xa, la = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(lam, dtype=float))
    if np.any(la < 0):
        raise DomainError("noncentrality must be nonnegative")
    shape = xa.shape
    xf = np.ravel(xa).astype(float)
    lf = np.ravel(la).astype(float)
    out = np.zeros(xf.shape)
    pos = xf > 0
    if np.any(pos):
        if d == 1 and method == "auto":
            rx = np.sqrt(xf[pos])
            rl = np.sqrt(lf[pos])
            out[pos] = normal_prob(-rx - rl, rx - rl)
        else:
            # |X| >= |mu| - |Z|, and P(|Z| > sqrt(d) + 40) is far below double precision
            far = pos & (np.sqrt(lf) - np.sqrt(np.maximum(xf, 0.0)) > math.sqrt(d) + 40.0)
            near = pos & ~far
            out[near] = _ncx2_series(xf[near], int(d), lf[near])
    out = np.clip(out, 0.0, 1.0)
    out[np.isnan(xf) | np.isnan(lf)] = np.nan
    if shape == ():
        return float(out[0])
    return out.reshape(shape)


def noncentral_chisq_quantile(p: float, d: int, lam: float) -> float:
    """Point x with Psi_d(x; lam) = p, found by bracketed root finding."""
    if not 0.0 < p < 1.0:
        raise DomainError(f"probability must lie in (0, 1), got {p}")
    if lam < 0:
        raise DomainError("noncentrality must be nonnegative")

    def g(x):
        return noncentral_chisq_cdf(x, d, lam) - p

    hi = (math.sqrt(d) + math.sqrt(lam) + 10.0) ** 2
    while g(hi) < 0:
        hi *= 2.0
    return float(optimize.brentq(g, 0.0, hi, xtol=1e-13, rtol=8.9e-16, maxiter=500))


# ---------------------------------------------------------------------------
# Gauss-Kronrod (7, 15) rule

_XGK = np.array([
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.0,
])
_WGK = np.array([
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714,
])
_WG = np.array([
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327,
])
KRONROD_NODES = np.concatenate([-_XGK[:-1], [0.0], _XGK[:-1][::-1]])
KRONROD_WEIGHTS = np.concatenate([_WGK[:-1], [_WGK[-1]], _WGK[:-1][::-1]])
# Gauss nodes sit at the odd Kronrod positions
_G_IDX = np.array([1, 3, 5, 7, 9, 11, 13])
GAUSS_WEIGHTS = np.concatenate([_WG[:-1], [_WG[-1]], _WG[:-1][::-1]])


def integrate_batch(
    f: Callable[[np.ndarray, np.ndarray], np.ndarray],
    lo,
    hi,
    tol: float = 1e-10,
    weight: str = "gauss",
    max_iter: int = 60,
    panel_width: float = 1.0,
) -> np.ndarray:
    """Adaptive G7-K15 quadrature of many integrals at once.

    Computes, for each ``i``, the integral over ``[lo[i], hi[i]]`` of
    ``f(u, i)`` times the standard normal density (``weight="gauss"``) or
    times 1 (``weight="none"``). ``f`` receives flat arrays of abscissae and
    owner indices and must return values of the same shape. Infinite limits
    are truncated at +-8.5 in the Gaussian-weighted case. Each integral gets
    absolute error budget ``tol``, spread over its panels by width.
    """
    lo = np.atleast_1d(np.asarray(lo, dtype=float)).copy()
    hi = np.atleast_1d(np.asarray(hi, dtype=float)).copy()
    lo, hi = np.broadcast_arrays(lo, hi)
    lo = lo.copy()
    hi = hi.copy()
    n = lo.size
    if weight == "gauss":
        lo = np.clip(lo, -TRUNCATION, TRUNCATION)
        hi = np.clip(hi, -TRUNCATION, TRUNCATION)
    elif not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
        raise IntegrationError("unweighted integration needs finite limits")
    width = np.maximum(hi - lo, 0.0)
    result = np.zeros(n)
    live = np.flatnonzero(width > 0)
    if live.size == 0:
        return result

    counts = np.maximum(1, np.ceil(width[live] / panel_width)).astype(int)
    owner = np.repeat(live, counts)
    offs = np.arange(owner.size) - np.repeat(np.cumsum(counts) - counts, counts)
    step = width[live] / counts
    a = lo[owner] + offs * np.repeat(step, counts)
    b = a + np.repeat(step, counts)
    budget = tol / np.where(width > 0, width, 1.0)

    for _ in range(max_iter):
        mid = 0.5 * (a + b)
        half = 0.5 * (b - a)
        x = mid[:, None] + half[:, None] * KRONROD_NODES[None, :]
        vals = np.asarray(f(x.ravel(), np.repeat(owner, KRONROD_NODES.size)), dtype=float)
        vals = vals.reshape(x.shape)
        if weight == "gauss":
            vals = vals * np.exp(-0.5 * x * x) / _SQRT_2PI
        if not np.all(np.isfinite(vals)):
            raise IntegrationError("integrand returned non-finite values")
        k = half * (vals @ KRONROD_WEIGHTS)
        g = half * (vals[:, _G_IDX] @ GAUSS_WEIGHTS)
        err = np.abs(k - g)
        ok = (err <= budget[owner] * (b - a)) | (half < 1e-13)
        np.add.at(result, owner[ok], k[ok])
        if np.all(ok):
            return result
        a, b, owner = a[~ok], b[~ok], owner[~ok]
        m = 0.5 * (a + b)
        a, b, owner = np.concatenate([a, m]), np.concatenate([m, b]), np.concatenate([owner, owner])
    raise IntegrationError(f"no convergence after {max_iter} subdivisions")


def gauss_weighted_integral(f: Callable, lo: float, hi: float, tol: Tolerance | float = QUAD_TOL) -> float:
    """Integral of ``f(u) * phi(u)`` over ``[lo, hi]``; infinite limits allowed.

    ``f`` must accept a numpy array.
    """
    if not lo < hi:
        raise DomainError(f"need lo < hi, got [{lo}, {hi}]")
    t = tol.abs_tol if isinstance(tol, Tolerance) else float(tol)
    it = tol.max_iter if isinstance(tol, Tolerance) else QUAD_TOL.max_iter

    def wrapped(u, _owner):
        return np.broadcast_to(np.asarray(f(u), dtype=float), u.shape)

    return float(integrate_batch(wrapped, [lo], [hi], tol=t, max_iter=it)[0])


# ---------------------------------------------------------------------------
# Root finding and minimization


def find_root_monotone(g: Callable[[float], float], lo: float, hi: float, tol: Tolerance = ROOT_TOL) -> float:
    """Root of a nondecreasing ``g`` with ``g(lo) <= 0 <= g(hi)``.

    Brent's method (inverse quadratic interpolation with bisection fallback),
    terminated once the bracket is narrower than ``tol.abs_tol``.
    """
    glo, ghi = g(lo), g(hi)
    if not (glo <= 0.0 <= ghi):
        raise BracketError(f"no sign change on [{lo}, {hi}]: g(lo)={glo}, g(hi)={ghi}")
    if glo == 0.0:
        return float(lo)
    if ghi == 0.0:
        return float(hi)
    return float(optimize.brentq(g, lo, hi, xtol=tol.abs_tol, rtol=8.9e-16, maxiter=max(tol.max_iter, 100)))


def expand_upper(g: Callable[[float], float], lo: float, hi: float, factor: float = 2.0, max_steps: int = 60) -> float:
    """Grow ``hi`` geometrically from ``lo`` until ``g(hi) >= 0``."""
    for _ in range(max_steps):
        if g(hi) >= 0.0:
            return hi
        hi = lo + (hi - lo) * factor
    raise BracketError(f"could not bracket a root above {lo}")


_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


def golden_section(f: Callable[[float], float], a: float, b: float, tol: float = 1e-10, max_iter: int = 200):
    """Golden-section search for a local minimum of ``f`` on [a, b]."""
    c = b - _INV_PHI * (b - a)
    d = a + _INV_PHI * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if abs(b - a) <= tol:
            break
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - _INV_PHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INV_PHI * (b - a)
            fd = f(d)
    return (c, fc) if fc <= fd else (d, fd)


def zoom_search(fv: Callable, a: float, b: float, tol: float = 1e-10, n_points: int = 17, max_iter: int = 60):
    """Local minimum of a vectorized ``fv`` on [a, b] by repeated sub-grids,
    each zooming into the two cells around the current best point."""
    best_x, best_f = a, math.inf
    for _ in range(max_iter):
        xs = np.linspace(a, b, n_points)
        vals = fv(xs)
        j = int(np.argmin(vals))
        if vals[j] < best_f:
            best_x, best_f = float(xs[j]), float(vals[j])
        if b - a <= tol:
            break
        a, b = xs[max(j - 1, 0)], xs[min(j + 1, n_points - 1)]
    return best_x, best_f


def minimize_on_interval(
    f: Callable,
    lo: float,
    hi: float,
    n_grid: int = 512,
    tol: float = 1e-10,
    vectorized: bool = True,
) -> tuple[float, float]:
    """Global minimum of ``f`` on [lo, hi]: dense grid, then local refinement
    inside the cells adjacent to the best grid point.

    With ``vectorized=True`` ``f`` is called with whole arrays and the
    refinement zooms with sub-grids; otherwise it is a golden-section search.
    """
    if lo > hi:
        raise DomainError(f"need lo <= hi, got [{lo}, {hi}]")

    def fv(x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if vectorized:
            return np.asarray(f(x), dtype=float).reshape(x.shape)
        return np.array([float(f(xi)) for xi in x])

    if hi == lo:
        return float(lo), float(fv(lo)[0])
    grid = np.linspace(lo, hi, n_grid)
    vals = fv(grid)
    i = int(np.argmin(vals))
    best_x, best_f = float(grid[i]), float(vals[i])
    a = grid[max(i - 1, 0)]
    b = grid[min(i + 1, n_grid - 1)]
    if vectorized:
        x, fx = zoom_search(fv, float(a), float(b), tol=tol)
    else:
        x, fx = golden_section(lambda s: float(fv(s)[0]), float(a), float(b), tol=tol)
    if fx < best_f:
        return float(x), float(fx)
    return best_x, best_f


# ---------------------------------------------------------------------------
# Quasi Monte Carlo


def symmetry_group(dim: int) -> np.ndarray:
    """Signed permutation matrices used to symmetrize QMC point sets: the full
    group for dim <= 2, all sign flips up to dim 5, and +-identity beyond."""
    if dim > 5:
        return np.stack([np.eye(dim), -np.eye(dim)])
    signs = np.array(list(itertools.product([1.0, -1.0], repeat=dim)))
    perms = list(itertools.permutations(range(dim))) if dim <= 2 else [tuple(range(dim))]
    return np.stack([np.diag(sg)[list(pm)] for pm in perms for sg in signs])


def qmc_normal_points(cfg: QmcConfig) -> list[np.ndarray]:
    """Per-replicate standard-normal points from independently scrambled
    Sobol sequences. Deterministic in ``cfg.seed``."""
    per = cfg.n_points // cfg.replicates
    group = symmetry_group(cfg.dim) if cfg.symmetric else np.eye(cfg.dim)[None]
    base = per // group.shape[0]
    seeds = np.random.SeedSequence(cfg.seed).spawn(cfg.replicates)
    out = []
    for ss in seeds:
        sampler = qmc.Sobol(d=cfg.dim, scramble=True, seed=np.random.default_rng(ss))
        u = sampler.random_base2(int(math.log2(base))) if base > 1 else sampler.random(1)
        # scrambling never yields exact 0/1 in practice; clamp for safety
        z = special.ndtri(np.clip(u, 1e-16, 1.0 - 1e-16))
        out.append(np.concatenate([z @ g.T for g in group]))
    return out


def qmc_integrate(f: Callable[[np.ndarray], np.ndarray], cfg: QmcConfig) -> tuple[float, float]:
    """E[f(Z)] for Z ~ N(0, I_dim) by randomized QMC.

    ``f`` maps an (n, dim) array to n values. Returns the mean over
    replicates and the standard error of that mean.
    """
    means = []
    for z in qmc_normal_points(cfg):
        v = np.asarray(f(z), dtype=float)
        if v.shape != (z.shape[0],):
            raise DomainError(f"integrand returned shape {v.shape}, expected ({z.shape[0]},)")
        means.append(v.mean())
    means = np.array(means)
    return float(means.mean()), float(means.std(ddof=1) / math.sqrt(means.size))
