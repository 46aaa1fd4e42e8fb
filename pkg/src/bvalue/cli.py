"""Command-line interface.

    bvalue interval --input request.json
    bvalue curve --input request.json --format csv
    bvalue bvalue --input request.json
    bvalue oracle --input request.json --n-draws 200000

A request is one JSON document (file or stdin); command-line flags override
its fields. Reports go to stdout as JSON with 17 significant digits, or CSV
for curves. Exit codes: 0 success, 2 invalid request, 3 solver failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import jsonschema
import numpy as np

from . import __version__
from .b_values import b_surface, b_value, b_value_generic
from .dependence import correlated_b_value, correlated_interval, decorrelate
from .errors import BracketError, DomainError, IntegrationError, MonotonicityError, SolverError
from .estimators import EstimatorPair, FusionProblem, MultiProblem
from .oracle import McConfig, mc_coverage
from .solver import IntervalResult, confidence_interval, half_length_fusion, region_radius, sensitivity_curve

SCHEMA_VERSION = 1

_num = {"type": "number"}
_vec = {"type": "array", "items": _num, "minItems": 1}
_mat = {"type": "array", "items": _vec, "minItems": 1}

REQUEST_SCHEMA = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "setting": {"enum": ["univariate", "multivariate", "fusion"]},
        "zeta": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "alpha": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "kinds": {"type": "array", "items": {"enum": ["PW", "PT", "ST", "unbiased"]}, "minItems": 1, "uniqueItems": True},
        "side": {"enum": ["two_sided", "lower", "upper"]},
        "b": {"oneOf": [{"type": "number", "minimum": 0}, {"type": "array", "items": {"type": "number", "minimum": 0}, "minItems": 1}]},
        "b_grid": {"type": "array", "items": {"type": "number", "minimum": 0}, "minItems": 1},
        "rays": {"oneOf": [{"type": "integer", "minimum": 2}, {"type": "array", "items": _vec, "minItems": 1}]},
        "tau0_hat": {"oneOf": [_num, _vec]},
        "tau1_hat": {"oneOf": [_num, _vec]},
        "sigma0_sq": {"type": "number", "exclusiveMinimum": 0},
        "sigma1_sq": {"type": "number", "exclusiveMinimum": 0},
        "rho": {"type": "number", "minimum": -1, "maximum": 1},
        "biased": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["tau_hat", "sigma_sq"],
                "properties": {"tau_hat": _num, "sigma_sq": {"type": "number", "exclusiveMinimum": 0}},
            },
        },
        "Sigma0": _mat,
        "Sigma1": _mat,
        "Sigma_scale": _mat,
        "q": {"type": "number", "minimum": 0},
        "h_star": {"enum": ["sqrt", "inverse"]},
    },
    "required": ["setting"],
    "allOf": [
        {"if": {"properties": {"setting": {"const": "univariate"}}},
         "then": {"required": ["tau0_hat", "tau1_hat", "sigma0_sq", "sigma1_sq"],
                  "properties": {"tau0_hat": _num, "tau1_hat": _num}}},
        {"if": {"properties": {"setting": {"const": "multivariate"}}},
         "then": {"required": ["tau0_hat", "tau1_hat", "Sigma0", "Sigma1"],
                  "properties": {"tau0_hat": _vec, "tau1_hat": _vec}}},
        {"if": {"properties": {"setting": {"const": "fusion"}}},
         "then": {"required": ["tau0_hat", "sigma0_sq", "biased"], "properties": {"tau0_hat": _num}}},
    ],
}

DEFAULTS = {"zeta": 0.05, "alpha": 0.05, "side": "two_sided", "rho": 0.0, "h_star": "sqrt"}
DEFAULT_KINDS = {"univariate": ["unbiased", "PW", "PT", "ST"], "multivariate": ["PW", "PT", "ST"], "fusion": ["PW", "PT", "ST"]}


class RequestError(Exception):
    """Invalid request (exit code 2)."""


# ---------------------------------------------------------------------------
# Serialization


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return '"nan"'
    if math.isinf(x):
        return '"inf"' if x > 0 else '"-inf"'
    return format(x, ".17g")


def to_json(obj, indent: int = 2, _level: int = 0) -> str:
    """Deterministic JSON: floats with 17 significant digits, non-finite
    values as strings, key order preserved."""
    pad = " " * (indent * (_level + 1))
    end = " " * (indent * _level)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {to_json(v, indent, _level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        seq = list(obj)
        if not seq:
            return "[]"
        if all(not isinstance(v, (dict, list, tuple, np.ndarray)) for v in seq):
            return "[" + ", ".join(to_json(v, indent, _level + 1) for v in seq) + "]"
        return "[\n" + ",\n".join(pad + to_json(v, indent, _level + 1) for v in seq) + "\n" + end + "]"
    if obj is None:
        return "null"
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, (int, float, np.integer, np.floating, bool, np.bool_)):
        return _fmt(obj)
    return json.dumps(str(obj))


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return [_jsonable(v) for v in x.tolist()]
    return x


# ---------------------------------------------------------------------------
# Requests


def load_request(args) -> dict:
    if args.input and args.input != "-":
        with open(args.input, encoding="utf-8") as fh:
            text = fh.read()
    elif args.input == "-" or (args.tau0_hat is None and not sys.stdin.isatty()):
        # a piped document is read implicitly unless the flags already describe the estimates
        text = sys.stdin.read()
    else:
        text = "{}"
    try:
        req = json.loads(text) if text.strip() else {}
    except json.JSONDecodeError as exc:
        raise RequestError(f"input is not valid JSON: {exc}") from exc
    if not isinstance(req, dict):
        raise RequestError("request must be a JSON object")
    overrides = {
        "setting": args.setting, "zeta": args.zeta, "alpha": args.alpha, "side": args.side,
        "tau0_hat": args.tau0_hat, "tau1_hat": args.tau1_hat, "sigma0_sq": args.sigma0_sq,
        "sigma1_sq": args.sigma1_sq, "rho": args.rho, "q": args.q,
        "kinds": args.kinds.split(",") if args.kinds else None,
        "b": args.b,
        "b_grid": [float(v) for v in args.b_grid.split(",")] if args.b_grid else None,
        "rays": args.rays,
    }
    for k, v in overrides.items():
        if v is not None:
            req[k] = v
    # plain flag calls describe a single pair
    req.setdefault("setting", "univariate")
    try:
        jsonschema.Draft7Validator(REQUEST_SCHEMA).validate(req)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise RequestError(f"schema violation at {where}: {exc.message}") from exc
    for k, v in DEFAULTS.items():
        req.setdefault(k, v)
    req.setdefault("kinds", DEFAULT_KINDS[req["setting"]])
    return req


def _pair(req) -> EstimatorPair:
    return EstimatorPair(req["tau0_hat"], req["tau1_hat"], req["sigma0_sq"], req["sigma1_sq"], req["rho"])


def _multi(req) -> MultiProblem:
    return MultiProblem(
        np.asarray(req["tau0_hat"], float), np.asarray(req["tau1_hat"], float),
        np.asarray(req["Sigma0"], float), np.asarray(req["Sigma1"], float),
        None if "Sigma_scale" not in req else np.asarray(req["Sigma_scale"], float),
        q=req.get("q"), h_star=req["h_star"], alpha=req["alpha"],
    )


def _fusion(req) -> FusionProblem:
    return FusionProblem(req["tau0_hat"], req["sigma0_sq"], [(s["tau_hat"], s["sigma_sq"]) for s in req["biased"]])


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("BVAL_THREADS", os.cpu_count() or 1)))
    except ValueError:
        return 1


def _fan_out(fn, items):
    """Apply fn to each item on a worker pool, results in input order."""
    with ThreadPoolExecutor(max_workers=_threads()) as pool:
        return list(pool.map(fn, items))


def _scalar_b(req) -> float:
    b = req.get("b", 0.0)
    if isinstance(b, list):
        if len(b) != 1:
            raise RequestError("univariate setting needs a scalar b")
        b = b[0]
    return float(b)


def _vector_b(req, n: int) -> np.ndarray:
    b = np.asarray(req.get("b", 0.0), float)
    if b.ndim == 0:
        return np.full(n, float(b))
    if b.size != n:
        raise RequestError(f"b must have {n} components")
    return b


def _interval_row(r: IntervalResult) -> dict:
    return {
        "kind": r.kind, "center": r.center, "lower": r.lower, "upper": r.upper,
        "half_length_raw": r.half_length_raw, "half_length_scaled": r.half_length_scaled,
        "bound_b": _jsonable(r.bound_b), "worst_case_t": _jsonable(r.worst_case_t),
        "diagnostics": _jsonable(r.diagnostics),
    }


def _solve_univariate(req, kind, b):
    pair = _pair(req)
    if kind != "unbiased" and pair.rho != 0.0:
        return correlated_interval(kind, pair, b, req["zeta"], req["alpha"], req["side"])
    return confidence_interval(kind, pair, b, req["zeta"], req["alpha"], req["side"])


def _header(req) -> dict:
    return {"schema_version": SCHEMA_VERSION, "version": __version__, "setting": req["setting"],
            "zeta": req["zeta"], "alpha": req["alpha"], "side": req["side"]}


# ---------------------------------------------------------------------------
# Commands


def cmd_interval(req) -> dict:
    out = _header(req)
    setting = req["setting"]
    if setting == "univariate":
        b = _scalar_b(req)
        out["b"] = b
        out["results"] = _fan_out(lambda k: _interval_row(_solve_univariate(req, k, b)), req["kinds"])
    elif setting == "multivariate":
        prob = _multi(req)
        b = _vector_b(req, prob.d)
        out["b"] = b.tolist()
        out["q"] = prob.q

        def solve(kind):
            r = region_radius(kind, b, req["zeta"], prob)
            return {"kind": r.kind, "center": r.center.tolist(), "M": r.M, "metric": r.metric.tolist(),
                    "worst_case_t": r.worst_case_t.tolist(), "diagnostics": _jsonable(r.diagnostics)}

        out["results"] = _fan_out(solve, _no_unbiased(req))
    else:
        prob = _fusion(req)
        b = _vector_b(req, prob.K)
        out["b"] = b.tolist()
        out["results"] = _fan_out(
            lambda k: _interval_row(half_length_fusion(k, b, req["zeta"], prob, req["alpha"])), _no_unbiased(req))
    return out


def _no_unbiased(req):
    kinds = [k for k in req["kinds"] if k != "unbiased"]
    if not kinds:
        raise RequestError("the unbiased reference is only available in the univariate setting")
    return kinds


CURVE_COLUMNS = ["kind", "b", "center", "lower", "upper", "half_length_raw", "worst_case_t"]


def cmd_curve(req) -> list[dict]:
    if req["setting"] != "univariate":
        raise RequestError("curves are available for the univariate setting")
    grid = req.get("b_grid")
    if grid is None:
        raise RequestError("curve needs b_grid")
    if any(b2 < b1 for b1, b2 in zip(grid, grid[1:])):
        raise RequestError("b_grid must be sorted ascending")
    pair = _pair(req)

    def one(kind):
        if kind == "unbiased":
            return [confidence_interval("unbiased", pair, b, req["zeta"], req["alpha"], req["side"]) for b in grid]
        if pair.rho != 0.0:
            return [correlated_interval(kind, pair, b, req["zeta"], req["alpha"], req["side"]) for b in grid]
        return sensitivity_curve(kind, req["side"], grid, pair, req["zeta"], req["alpha"], include_unbiased=False)

    rows = []
    for res in _fan_out(one, req["kinds"]):
        for r in res:
            rows.append({"kind": r.kind, "b": float(r.bound_b), "center": r.center, "lower": r.lower,
                         "upper": r.upper, "half_length_raw": r.half_length_raw,
                         "worst_case_t": float(r.worst_case_t), "error": r.diagnostics.get("error")})
    return rows


def curve_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CURVE_COLUMNS)
    for r in rows:
        w.writerow([r["kind"]] + [format(float(r[c]), ".17g") for c in CURVE_COLUMNS[1:]])
    return buf.getvalue()


def _bvalue_row(bv, **extra) -> dict:
    row = {"kind": bv.kind, "case": bv.case, "value": bv.value, "residual": bv.residual}
    row.update(extra)
    row["diagnostics"] = _jsonable(bv.diagnostics)
    return row


def cmd_bvalue(req, cross_check: bool = False) -> dict:
    out = _header(req)
    setting = req["setting"]
    kinds = _no_unbiased(req)
    if setting == "univariate":
        pair = _pair(req)
        if pair.rho != 0.0:
            m = decorrelate(pair)
            out["decorrelation"] = {"scale": m.scale, "tau1_hat_prime": m.pair_prime.tau1_hat,
                                    "sigma1_sq_prime": m.pair_prime.sigma1_sq}

            def one(kind):
                orig, prime, _ = correlated_b_value(kind, pair, req["zeta"], req["alpha"], req["side"])
                return _bvalue_row(orig, b_prime=prime.value)
        else:
            def one(kind):
                bv = b_value(kind, pair, req["zeta"], req["alpha"], req["side"])
                extra = {}
                if cross_check and req["side"] == "two_sided":
                    obs = abs(confidence_interval(kind, pair, 0.0, req["zeta"], req["alpha"]).center)
                    curve = lambda b: confidence_interval(kind, pair, b, req["zeta"], req["alpha"]).half_length_scaled
                    extra["generic_value"] = b_value_generic(curve, obs, kind, req["zeta"]).value
                return _bvalue_row(bv, **extra)

        out["results"] = _fan_out(one, kinds)
        return out
    prob = _multi(req) if setting == "multivariate" else _fusion(req)
    rays = req.get("rays", 33)
    dirs = None if isinstance(rays, int) else rays
    n_rays = rays if isinstance(rays, int) else len(rays)
    aq = req.get("q") if setting == "multivariate" else req["alpha"]

    def surf(kind):
        s = b_surface(kind, prob, req["zeta"], aq, n_rays=n_rays, directions=dirs)
        return {"kind": s.kind, "rays": [{"direction": d.tolist(), "radius": r, "diagnostics": _jsonable(g)}
                                         for (d, r), g in zip(s.rays, s.diagnostics)]}

    out["results"] = _fan_out(surf, kinds)
    return out


def cmd_oracle(req, cfg: McConfig, inflate: float = 1.0) -> dict:
    """Solve each interval, then check its Monte Carlo coverage at the
    reported worst-case bias (pass: coverage >= 1 - zeta - 3 stderr)."""
    out = _header(req)
    out.update(n_draws=cfg.n_draws, seed=cfg.seed, antithetic=cfg.antithetic, inflate=inflate)
    setting = req["setting"]
    target = 1.0 - req["zeta"]

    def verdict(kind, cov, se, worst):
        return {"kind": kind, "worst_case_t": _jsonable(worst), "coverage": cov, "stderr": se,
                "pass": bool(cov >= target - 3.0 * se)}

    if setting == "univariate":
        b = _scalar_b(req)
        pair = _pair(req)

        def one(kind):
            r = _solve_univariate(req, kind, b)
            if kind == "unbiased":
                # the unbiased interval does not involve tau1_hat; check it at zero bias
                cov, se = _unbiased_mc(pair, r.half_length_scaled * inflate, req["side"], cfg)
                return verdict(kind, cov, se, 0.0)
            delta = float(r.worst_case_t) * pair.sigma0
            if pair.rho != 0.0:
                delta *= decorrelate(pair).scale
            cov, se = mc_coverage(kind, "univariate", delta, pair, r.half_length_scaled * inflate, cfg,
                                  side=req["side"], alpha=req["alpha"])
            return verdict(kind, cov, se, r.worst_case_t)
        out["b"] = b
        out["results"] = _fan_out(one, req["kinds"])
    elif setting == "multivariate":
        prob = _multi(req)
        b = _vector_b(req, prob.d)

        def one(kind):
            r = region_radius(kind, b, req["zeta"], prob)
            cov, se = mc_coverage(kind, "multivariate", prob.scale_root @ r.worst_case_t, prob, r.M * inflate**2, cfg)
            return verdict(kind, cov, se, r.worst_case_t)
        out["b"] = b.tolist()
        out["results"] = _fan_out(one, _no_unbiased(req))
    else:
        prob = _fusion(req)
        b = _vector_b(req, prob.K)

        def one(kind):
            r = half_length_fusion(kind, b, req["zeta"], prob, req["alpha"])
            cov, se = mc_coverage(kind, "fusion", r.worst_case_t * prob.sigma0, prob, r.half_length_scaled * inflate,
                                  cfg, alpha=req["alpha"])
            return verdict(kind, cov, se, r.worst_case_t)
        out["b"] = b.tolist()
        out["results"] = _fan_out(one, _no_unbiased(req))
    out["all_pass"] = all(r["pass"] for r in out["results"])
    return out


def _unbiased_mc(pair: EstimatorPair, h: float, side: str, cfg: McConfig):
    # PW with an infinitely noisy second estimator reduces to tau0_hat alone
    from .oracle import _normals, _side_hit, _summarize
    hits = [_side_hit(pair.sigma0 * z[:, 0], h, side) for z in _normals(cfg, 1)]
    return _summarize(hits, cfg)


# ---------------------------------------------------------------------------
# Entry point


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bvalue", description="Bias-robust intervals and b-values for combined estimators.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--input", "-i", help="request JSON file ('-' for stdin)")
    common.add_argument("--setting", choices=["univariate", "multivariate", "fusion"])
    common.add_argument("--zeta", type=float)
    common.add_argument("--alpha", type=float)
    common.add_argument("--side", choices=["two_sided", "lower", "upper"])
    common.add_argument("--kinds", help="comma-separated subset of PW,PT,ST,unbiased")
    common.add_argument("--b", type=float)
    common.add_argument("--b-grid", dest="b_grid", help="comma-separated ascending bias bounds")
    common.add_argument("--rays", type=int)
    common.add_argument("--tau0-hat", dest="tau0_hat", type=float)
    common.add_argument("--tau1-hat", dest="tau1_hat", type=float)
    common.add_argument("--sigma0-sq", dest="sigma0_sq", type=float)
    common.add_argument("--sigma1-sq", dest="sigma1_sq", type=float)
    common.add_argument("--rho", type=float)
    common.add_argument("--q", type=float)
    sub.add_parser("interval", parents=[common], help="intervals at one bias bound")
    c = sub.add_parser("curve", parents=[common], help="sensitivity curve over b_grid")
    c.add_argument("--format", choices=["csv", "json"], default="csv")
    bv = sub.add_parser("bvalue", parents=[common], help="b-values (or b-surfaces)")
    bv.add_argument("--cross-check", action="store_true", help="also compute the b-value by bisection on the curve")
    o = sub.add_parser("oracle", parents=[common], help="Monte Carlo coverage check of solved intervals")
    o.add_argument("--n-draws", type=int, default=200_000)
    o.add_argument("--seed", type=int, default=0)
    o.add_argument("--no-antithetic", action="store_true")
    o.add_argument("--inflate", type=float, default=1.0, help="multiply every half-length before checking")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        req = load_request(args)
        if args.command == "interval":
            text = to_json(cmd_interval(req))
        elif args.command == "curve":
            rows = cmd_curve(req)
            text = curve_csv(rows) if args.format == "csv" else to_json({**_header(req), "rows": rows})
        elif args.command == "bvalue":
            text = to_json(cmd_bvalue(req, args.cross_check))
        else:
            cfg = McConfig(n_draws=args.n_draws, seed=args.seed, antithetic=not args.no_antithetic)
            text = to_json(cmd_oracle(req, cfg, args.inflate))
    except (RequestError, DomainError) as exc:
        print(f"bvalue: invalid request: {exc}", file=sys.stderr)
        return 2
    except (SolverError, BracketError, IntegrationError, MonotonicityError) as exc:
        print(f"bvalue: solver failure: {exc}", file=sys.stderr)
        return 3
    sys.stdout.write(text if text.endswith("\n") else text + "\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
