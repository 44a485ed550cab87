"""Command-line interface: ``bvip <subcommand> ...``.

Exit codes: 0 success, 1 usage, 2 parse error, 3 hypothesis-validation
failure, 4 numeric failure (NaN, overflow, grid cap, violated bound).
"""
from __future__ import annotations

import argparse
import json
import math
import os
import re
import sys

from . import bivariate as bv
from . import bounds, estimate, experiments
from .spectrum import (EnumerationCapError, MultilinearPoly, PolyParseError, degree,
                       influence_probabilistic, influence_spectral, is_boolean_valued,
                       parse_poly, parseval_second_moment)

EXIT_OK, EXIT_USAGE, EXIT_PARSE, EXIT_HYPOTHESIS, EXIT_NUMERIC = 0, 1, 2, 3, 4


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------------------
# Loading
# ---------------------------------------------------------------------------

_INDEX_RE = re.compile(r"([xy])(\d+)")


def load_poly(path: str, n: int | None = None, prune_tol: float = 0.0):
    """Read a polynomial from JSON or from a text expression.

    Text containing ``y`` variables is read as bivariate; ``n`` defaults to
    the largest index present.
    """
    with open(path) as fh:
        text = fh.read()
    if path.endswith(".json"):
        try:
            obj = json.loads(text)
        except json.JSONDecodeError as e:
            raise PolyParseError(f"invalid JSON: {e.msg}", e.pos) from e
        try:
            if obj.get("kind") == "bivariate":
                return bv.BivariatePoly.from_json(obj, prune_tol)
            return MultilinearPoly.from_json(obj, prune_tol)
        except (KeyError, TypeError, ValueError) as e:
            raise PolyParseError(f"malformed polynomial JSON: {e}") from e
    found = _INDEX_RE.findall(text)
    if n is None:
        n = max((int(d) for _, d in found), default=0)
    if any(name == "y" for name, _ in found):
        return bv.parse_bivariate(text.strip(), n, prune_tol)
    return parse_poly(text.strip(), n, prune_tol)


def parse_dist(arg: str) -> estimate.DistributionSpec:
    named = {"rademacher": estimate.rademacher, "gaussian": estimate.gaussian,
             "ternary": estimate.ternary}
    if arg in named:
        return named[arg]()
    if os.path.exists(arg):
        with open(arg) as fh:
            obj = json.load(fh)
    else:
        try:
            obj = json.loads(arg)
        except json.JSONDecodeError as e:
            raise UsageError(f"unknown distribution {arg!r}") from e
    return estimate.DistributionSpec.from_json(obj)


def _psi(args) -> estimate.TestFunction:
    if args.psi.lstrip().startswith("{"):
        return estimate.test_function_from_json(json.loads(args.psi))
    return estimate.test_function_from_name(args.psi)


def _check_dists(args, *dists):
    if not getattr(args, "allow_invalid", False):
        estimate.require_hypothesis(*dists)


# ---------------------------------------------------------------------------
# Output
# ---------------------------------------------------------------------------

def _emit(args, payload, rows=None, columns=None):
    if args.format == "csv":
        if rows is None:
            rows = [payload]
        if columns is None:
            columns = list(rows[0].keys()) if rows else []
        text = experiments.rows_to_csv(rows, columns)
    else:
        text = json.dumps(payload, indent=2) + "\n"
    if args.output:
        with open(args.output, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _check_finite(*values):
    for v in values:
        if v is not None and isinstance(v, float) and not math.isfinite(v):
            raise FloatingPointError(f"non-finite result {v}")


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_gen(args):
    spec = experiments.InstanceSpec(kind=args.kind, n=args.n, k=args.k, terms=args.terms,
                                    m=args.m, coeff=args.coeff, seed=args.seed)
    F, parts = experiments.gen_instance(spec)
    if args.format == "csv":
        rows = [{"x": " ".join(map(str, t["x"])), "y": " ".join(map(str, t["y"])),
                 "coeff": t["coeff"]} for t in F.to_json()["terms"]]
        _emit(args, None, rows, ["x", "y", "coeff"])
    else:
        _emit(args, F.to_json())


def cmd_show(args):
    P = load_poly(args.file, args.n)
    if isinstance(P, bv.BivariatePoly):
        d1, d2 = bv.side_degrees(P)
        parts = bv.decompose_separable(P)
        out = {"kind": "bivariate", "n": P.n, "terms": len(P), "side_degrees": [d1, d2],
               "expression": str(P), "separable": not isinstance(parts, bv.NotSeparable)}
        if isinstance(parts, bv.NotSeparable):
            out["offending"] = [bv.vars_from_mask(m) for m in parts.offending]
        else:
            out.update(f=str(parts.f), g=str(parts.g), h=str(parts.h))
    else:
        out = {"kind": "univariate", "n": P.n, "terms": len(P), "degree": degree(P),
               "expression": str(P), "second_moment": parseval_second_moment(P)}
    _emit(args, out)


def cmd_influence(args):
    P = load_poly(args.file, args.n)
    rows = []
    if isinstance(P, bv.BivariatePoly):
        g = bv.flatten(P)
        k = bv.resolve_k(P)
        for side in (1, 2):
            for t in range(1, P.n + 1):
                rows.append({
                    "side": side, "t": t, "sigma": bv.sigma(P, side, t, k),
                    "sigma_tilde": bv.sigma_tilde(P, side, t, k),
                    "expected_influence": bounds.expected_influence_exact(P, side, t),
                    "flat_influence": influence_spectral(g, t + (side - 1) * P.n),
                })
    else:
        boolean = P.n <= 20 and is_boolean_valued(P)
        for t in range(1, P.n + 1):
            row = {"t": t, "spectral": influence_spectral(P, t)}
            row["pivotal"] = influence_probabilistic(P, t) if boolean else None
            rows.append(row)
    _emit(args, rows, rows)


def cmd_bounds(args):
    P = load_poly(args.file, args.n)
    C = args.C if args.C is not None else _psi(args).C
    if isinstance(P, bv.BivariatePoly):
        rep = bounds.compare_bounds(P, C, instance_id=os.path.basename(args.file))
        _emit(args, rep.to_json())
    else:
        _emit(args, {"n": P.n, "k": degree(P), "C": C, "bip": bounds.bip_bound(P, C)})


def cmd_estimate(args):
    P = load_poly(args.file, args.n)
    dx, dy = parse_dist(args.dist_x), parse_dist(args.dist_y)
    _check_dists(args, dx, dy)
    psi = _psi(args)
    res = estimate.lhs_distance(P, dx, dy, psi, args.method, samples=args.samples,
                                seed=args.seed, workers=args.workers,
                                nodes_per_dim=args.nodes)
    _check_finite(res.value, res.half_width)
    out = {"lhs": res.value, "method": res.method, "half_width": res.half_width,
           "samples": res.samples, "seed": res.seed, "psi": psi.to_json(), "C": psi.C}
    if isinstance(P, bv.BivariatePoly):
        rep = bounds.compare_bounds(P, psi.C, res.value if res.method == "exact" else None,
                                    lhs_method=res.method, lhs_halfwidth=res.half_width)
        out.update(bvip1=rep.bvip1, bvip2=rep.bvip2, bip_flat=rep.bip_flat,
                   sep_bvip1=rep.sep_bvip1, sep_bvip2=rep.sep_bvip2, winner=rep.winner,
                   all_bounds_hold=rep.all_bounds_hold)
    else:
        b = bounds.bip_bound(P, psi.C)
        out["bip"] = b
        out["bound_holds"] = res.value <= b + bounds.LHS_TOL if res.method == "exact" else None
    _emit(args, out)
    if out.get("bound_holds") is False or out.get("all_bounds_hold") is False:
        raise FloatingPointError("exact gap exceeds a bound")


def cmd_hybrid(args):
    P = load_poly(args.file, args.n)
    if not isinstance(P, MultilinearPoly):
        raise UsageError("hybrid expects a univariate polynomial")
    dx, dy = parse_dist(args.dist_x), parse_dist(args.dist_y)
    _check_dists(args, dx, dy)
    psi = _psi(args)
    e = estimate.hybrid_expectations(P, dx, dy, psi)
    k = degree(P)
    rows = []
    for t in range(1, P.n + 1):
        step_bound = psi.C / 12 * 9 ** k * influence_spectral(P, t) ** 2
        gap = abs(e[t - 1] - e[t])
        rows.append({"t": t, "signed": e[t - 1] - e[t], "gap": gap, "step_bound": step_bound,
                     "holds": gap <= step_bound + bounds.LHS_TOL})
    if args.format == "csv":
        _emit(args, None, rows)
    else:
        _emit(args, {"steps": rows, "total": e[0] - e[-1], "bip": bounds.bip_bound(P, psi.C)})


def cmd_sweep(args):
    with open(args.config) as fh:
        cfg = experiments.ExperimentConfig.from_json(json.load(fh))
    if args.seed is not None:
        cfg.seed = args.seed
    cfg.allow_invalid = cfg.allow_invalid or args.allow_invalid
    if args.output is None and cfg.output:
        args.output = cfg.output
    try:
        rows = experiments.run_sweep(cfg, workers=args.workers)
    except experiments.BoundViolation as e:
        dump = (args.output or "sweep") + ".counterexample.json"
        with open(dump, "w") as fh:
            fh.write(experiments.rows_to_json(e.rows))
        raise FloatingPointError(f"{e}; counterexamples written to {dump}") from e
    if args.format == "csv":
        text = experiments.rows_to_csv(rows)
    else:
        text = experiments.rows_to_json(rows)
    if args.output:
        with open(args.output, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--format", choices=["json", "csv"], default="json")
    common.add_argument("-o", "--output", default=None)

    poly = argparse.ArgumentParser(add_help=False)
    poly.add_argument("-f", "--file", required=True, help="polynomial as .json or text")
    poly.add_argument("--n", type=int, default=None, help="variables per side (text input)")

    dist = argparse.ArgumentParser(add_help=False)
    dist.add_argument("--dist-x", default="rademacher")
    dist.add_argument("--dist-y", default="ternary")
    dist.add_argument("--psi", default="power4",
                      help="power0..power4, cosine, smooth_step, or a JSON object")
    dist.add_argument("--allow-invalid", action="store_true",
                      help="skip the moment-hypothesis check")

    p = _Parser(prog="bvip", description="Invariance-principle bounds and exact gaps.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen", parents=[common], help="generate a seeded instance")
    g.add_argument("--kind", default="random_bivariate",
                   choices=["random_bivariate", "separable", "crossterm_star"])
    g.add_argument("--n", type=int, default=4)
    g.add_argument("--k", type=int, default=1)
    g.add_argument("--terms", type=int, default=4)
    g.add_argument("--m", type=int, default=1)
    g.add_argument("--coeff", choices=list(experiments.COEFF_LAWS), default="uniform")
    g.set_defaults(func=cmd_gen)

    s = sub.add_parser("show", parents=[common, poly], help="print a canonical polynomial")
    s.set_defaults(func=cmd_show)

    s = sub.add_parser("influence", parents=[common, poly], help="per-coordinate influences")
    s.set_defaults(func=cmd_influence)

    s = sub.add_parser("bounds", parents=[common, poly], help="all bound formulas")
    s.add_argument("--C", type=float, default=None, help="bound on |psi''''|")
    s.add_argument("--psi", default="power4", help="take C from this test function")
    s.set_defaults(func=cmd_bounds)

    s = sub.add_parser("estimate", parents=[common, poly, dist], help="distinguisher gap")
    s.add_argument("--method", choices=["exact", "quadrature", "monte_carlo"], default="exact")
    s.add_argument("--samples", type=int, default=100_000)
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--nodes", type=int, default=16, help="Hermite nodes per dimension")
    s.set_defaults(func=cmd_estimate)

    s = sub.add_parser("hybrid", parents=[common, poly, dist], help="replacement path gaps")
    s.set_defaults(func=cmd_hybrid)

    s = sub.add_parser("sweep", parents=[common], help="run an experiment config")
    s.add_argument("-c", "--config", required=True)
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--allow-invalid", action="store_true")
    s.set_defaults(func=cmd_sweep)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as e:  # argparse exits on --help and usage errors
        return e.code if isinstance(e.code, int) else EXIT_USAGE
    if args.command in ("gen", "estimate") and args.seed is None:
        args.seed = 0
    try:
        args.func(args)
    except PolyParseError as e:
        print(f"parse error: {e}", file=sys.stderr)
        return EXIT_PARSE
    except estimate.HypothesisError as e:
        print(f"hypothesis check failed: {e}", file=sys.stderr)
        return EXIT_HYPOTHESIS
    except (EnumerationCapError, estimate.NotEnumerableError, FloatingPointError,
            OverflowError) as e:
        print(f"numeric failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except (UsageError, ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
