"""Half-length of each interval against the bias bound b.

Writes plot-ready CSV (one row per gamma, kind and b) for the pair
tau0_hat = 1, tau1_hat = 2, sigma0^2 = 1 at gamma in {10, 100}, then prints
a short summary of how the curves order themselves.

    python scripts/sensitivity_curves.py --out curves.csv
"""

import argparse
import csv
import sys

import numpy as np

from bvalue import EstimatorPair, confidence_interval, sensitivity_curve, unbiased_interval

KINDS = ("PW", "PT", "ST")


def build_rows(gammas, b_grid, zeta, alpha):
    rows = []
    for g in gammas:
        pair = EstimatorPair(1.0, 2.0, 1.0, 1.0 / g)
        for kind in KINDS:
            for r in sensitivity_curve(kind, "two_sided", b_grid, pair, zeta, alpha, include_unbiased=False):
                rows.append((g, kind, r.bound_b, r.center, r.lower, r.upper, r.half_length_scaled))
        u = unbiased_interval(pair, zeta)
        rows.extend((g, "unbiased", b, u.center, u.lower, u.upper, u.half_length_scaled) for b in b_grid)
    return rows


def summary(gammas, zeta, alpha):
    for g in gammas:
        pair = EstimatorPair(1.0, 2.0, 1.0, 1.0 / g)
        h = {k: confidence_interval(k, pair, 0.0, zeta, alpha).half_length_scaled for k in KINDS}
        big = {k: confidence_interval(k, pair, 100.0, zeta, alpha).half_length_scaled for k in ("PW", "ST")}
        st_far = confidence_interval("ST", pair, 1000.0, zeta, alpha).half_length_scaled
        unb = unbiased_interval(pair, zeta).half_length_scaled
        print(f"gamma={g:g}: b=0 half-lengths PW {h['PW']:.4f} PT {h['PT']:.4f} ST {h['ST']:.4f}; "
              f"unbiased {unb:.4f}; b=100 PW {big['PW']:.2f} ST {big['ST']:.4f}; b=1000 ST {st_far:.4f}",
              file=sys.stderr)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="-", help="CSV path, '-' for stdout")
    ap.add_argument("--b-max", type=float, default=3.0)
    ap.add_argument("--n-b", type=int, default=61)
    ap.add_argument("--zeta", type=float, default=0.05)
    ap.add_argument("--alpha", type=float, default=0.05)
    args = ap.parse_args(argv)
    gammas = (10.0, 100.0)
    b_grid = np.linspace(0.0, args.b_max, args.n_b)
    rows = build_rows(gammas, b_grid, args.zeta, args.alpha)
    fh = sys.stdout if args.out == "-" else open(args.out, "w", newline="")
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["gamma", "kind", "b", "center", "lower", "upper", "half_length"])
    for row in rows:
        w.writerow([f"{v:.10g}" if isinstance(v, float) else v for v in row])
    if fh is not sys.stdout:
        fh.close()
    summary(gammas, args.zeta, args.alpha)


if __name__ == "__main__":
    main()
