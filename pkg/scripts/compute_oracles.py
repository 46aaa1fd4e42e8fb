"""Compute the Monte Carlo and dense-scan reference values used by the tests.

The simulations here use plain numpy generators and formulas written out
from scratch, so they share no code with the library's coverage integrals.
Results are written to tests/data/oracles.json.

    python scripts/compute_oracles.py            # full draw counts (a few minutes)
"""

import json
import math
import pathlib
import sys

import numpy as np
from scipy.special import ndtr, ndtri

OUT = pathlib.Path(__file__).resolve().parents[1] / "tests" / "data" / "oracles.json"
BATCH = 1_000_000


def batched(n, seed, dim, fn):
    """Mean and stderr of fn(z) over n standard normal draws of width dim."""
    rng = np.random.default_rng(seed)
    total, total_sq, done = 0.0, 0.0, 0
    while done < n:
        m = min(BATCH, n - done)
        v = fn(rng.standard_normal((m, dim)))
        total += v.sum()
        total_sq += (v * v).sum()
        done += m
    mean = total / n
    var = max(total_sq / n - mean**2, 0.0)
    return {"value": mean, "stderr": math.sqrt(var / n), "n": n, "seed": seed}


def quantile(n, seed, dim, fn, p):
    rng = np.random.default_rng(seed)
    parts, done = [], 0
    while done < n:
        m = min(BATCH, n - done)
        parts.append(fn(rng.standard_normal((m, dim))))
        done += m
    x = np.sort(np.concatenate(parts))
    q = float(np.quantile(x, p))
    # stderr of a sample quantile from a local density estimate
    h = 0.01
    dens = (np.searchsorted(x, q + h) - np.searchsorted(x, q - h)) / (2 * h * n)
    return {"value": q, "stderr": math.sqrt(p * (1 - p) / n) / dens, "n": n, "seed": seed}


def mixture_error(z, gamma, alpha, t, kind):
    """Standardized error (tau_hat - tau) / (sigma0 / sqrt(1+gamma)) from two
    independent normals: a normal part plus a part that depends on whether
    the pretest rejects."""
    c = -ndtri(alpha / 2)
    s = math.sqrt(gamma / (1 + gamma))
    z1, z2 = z[:, 0], z[:, 1]
    stat = z2 + s * t  # pretest statistic in sd units
    rej = np.abs(stat) > c
    acc_part = gamma * t / math.sqrt(1 + gamma)
    if kind == "PT":
        rej_part = -math.sqrt(gamma) * z2
    else:
        rej_part = -math.sqrt(gamma) * (z2 - c * np.sign(stat))
    return z1 + np.where(rej, rej_part, acc_part)


def main(n_big=10_000_000, n_mid=1_000_000):
    out = {}

    # noncentral chi-square cdf and quantile, d=2
    out["ncx2_cdf_d2_x6_lam1"] = batched(
        n_big, 42, 2, lambda z: (((z[:, 0] + 1.0) ** 2 + z[:, 1] ** 2) <= 6.0).astype(float))
    out["ncx2_quantile_d2_lam4_p95"] = quantile(
        n_big, 42, 2, lambda z: (z[:, 0] + 2.0) ** 2 + z[:, 1] ** 2, 0.95)

    # E[Phi(1 + Z)]
    out["gauss_integral_phi_1_plus_u"] = batched(n_big, 7, 1, lambda z: ndtr(1.0 + z[:, 0]))

    # E[Psi_2(6; |A u|^2) 1(|u|^2 > q)], Psi_2 evaluated by inner simulation-free series
    A = np.array([[1.0, 0.4], [-0.3, 0.8]])
    q = 5.991464547107979

    def psi2(x, lam):
        # Psi_2(x; lam) = sum_j Pois(j; lam/2) P(chi2_{2+2j} <= x); chi2_{2m} cdf is a Poisson tail
        from scipy.stats import poisson
        j = np.arange(0, 400)
        w = poisson.pmf(j[None, :], lam[:, None] / 2)
        cen = 1.0 - poisson.cdf(j, x / 2)  # P(chi2_{2+2j} <= x) = P(Pois(x/2) >= j+1)
        return w @ cen

    def region(z):
        r = (z ** 2).sum(1)
        lam = ((z @ A.T) ** 2).sum(1)
        v = np.zeros(len(z))
        m = r > q
        v[m] = psi2(6.0, lam[m])
        return v

    out["qmc_region_psi2"] = batched(n_big, 42, 2, region)
    out["qmc_region_psi2"]["A"] = A.tolist()

    # folded-normal coverage and quantile
    g = 10.0
    mean = g * 0.5 / math.sqrt(1 + g)
    out["coverage_pw_L2.5_t0.5_g10"] = batched(n_big, 42, 1, lambda z: (np.abs(mean + z[:, 0]) <= 2.5).astype(float))
    out["folded_quantile_a1.507557_p95"] = quantile(n_big, 42, 1, lambda z: np.abs(mean + z[:, 0]), 0.95)

    # pretest coverage at t=0 with a near-useless pretest (alpha=0.99)
    out["coverage_pt_L2_t0_g10_a0.99"] = batched(
        n_mid, 42, 2, lambda z: (np.abs(mixture_error(z, 10.0, 0.99, 0.0, "PT")) <= 2.0).astype(float))
    # soft-threshold coverage, two-sided and lower one-sided
    out["coverage_st_L2_t1_g10_a0.05"] = batched(
        n_big, 42, 2, lambda z: (np.abs(mixture_error(z, 10.0, 0.05, 1.0, "ST")) <= 2.0).astype(float))
    out["coverage_st_lower_L2_t1_g10_a0.05"] = batched(
        n_big, 42, 2, lambda z: (mixture_error(z, 10.0, 0.05, 1.0, "ST") <= 2.0).astype(float))

    # multivariate ST, raw estimators, Sigma0 = diag(1, 2), Sigma1 = diag(0.1, 0.3), Sigma = Sigma0
    S0 = np.array([1.0, 2.0])
    S1 = np.array([0.1, 0.3])
    t = np.array([1.0, 0.5])
    delta = np.sqrt(S0) * t
    qv = 5.991464547107979
    M = 6.0

    def multi_st(z):
        e0 = np.sqrt(S0) * z[:, :2]
        e1 = delta + np.sqrt(S1) * z[:, 2:]
        diff = e1 - e0
        r = (diff ** 2 / (S0 + S1)).sum(1)
        h = np.where(r <= qv, 1.0, np.sqrt(qv / np.maximum(r, qv)))
        e = e0 + h[:, None] * diff * (S0 / (S0 + S1))
        return (((e ** 2) * (1 / S0 + 1 / S1)).sum(1) <= M).astype(float)

    out["coverage_multi_st_d2"] = batched(n_mid, 42, 4, multi_st)
    out["coverage_multi_st_d2"].update(Sigma0=S0.tolist(), Sigma1=S1.tolist(), t=t.tolist(), M=M, q=qv)

    # fusion K=2, gamma = (10, 5), t = (0.5, 1), L = 2, sigma0 = 1
    gam = np.array([10.0, 5.0])
    sj = np.sqrt(1.0 / gam)
    tf = np.array([0.5, 1.0])
    c = -ndtri(0.025)
    thr = np.sqrt(1.0 + sj ** 2) * c
    scale = 1.0 / math.sqrt(1.0 + gam.sum())
    w = gam / (1.0 + gam.sum())

    def fusion(kind):
        def f(z):
            e0 = z[:, 0]
            ej = tf + sj * z[:, 1:]
            diff = ej - e0[:, None]
            acc = np.abs(diff) <= thr
            if kind == "PT":
                step = np.where(acc, diff, 0.0)
            else:
                step = np.where(acc, diff, thr * np.sign(diff))
            e = e0 + step @ w
            return (np.abs(e) <= 2.0 * scale).astype(float)
        return f

    for kind in ("PT", "ST"):
        out[f"coverage_fusion_{kind}_K2"] = batched(n_mid, 42, 3, fusion(kind))

    # dense-scan argmin of PT coverage (library integrand, independent search)
    sys.path.insert(0, str(OUT.parents[2] / "src"))
    from bvalue.coverage import coverage_pt
    from bvalue.solver import half_length_pt

    ts = np.linspace(0.0, 2.0, 100_001)
    cov = coverage_pt(2.5, ts, 10.0, 0.05)
    i = int(np.argmin(cov))
    out["pt_argmin_L2.5_g10"] = {"t": float(ts[i]), "min": float(cov[i]), "n": ts.size}
    L = half_length_pt(2.0, 0.05, 10.0, 0.05).half_length_raw
    cov = coverage_pt(L, ts, 10.0, 0.05)
    i = int(np.argmin(cov))
    out["pt_worst_t_b2_g10"] = {"t": float(ts[i]), "min": float(cov[i]), "L": L, "n": ts.size}

    OUT.parent.mkdir(parents=True, exist_ok=True)
    OUT.write_text(json.dumps(out, indent=2) + "\n")
    for k, v in out.items():
        print(k, v.get("value", v.get("t")), v.get("stderr", ""))


if __name__ == "__main__":
    main()
