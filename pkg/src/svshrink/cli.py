"""Command-line interface: ``svshrink {estimate,bench,check-superharmonic,hypergeom}``."""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace

import numpy as np

from . import estimators as est
from . import priors
from . import riskbench as rb
from .exceptions import ShrinkageError
from .matnorm import ModelSpec, replication_rng, singular_values, svd
from .zonal import DEFAULT_CONTROL, SeriesControl, hyp1f1_matrix

EXIT_OK, EXIT_FAIL, EXIT_INPUT = 0, 1, 2
ESTIMATE_METHODS = ("mle", "em", "em-plus", "js", "svs-bayes", "stein-bayes")


class InputError(Exception):
    pass


def read_matrix(path: str) -> np.ndarray:
    """Parse a matrix file: header ``n m`` then ``n`` rows of ``m`` reals."""
    with open(path) as fh:
        lines = [ln for ln in fh.read().splitlines()]
    rows = [(i + 1, ln.split()) for i, ln in enumerate(lines) if ln.strip() and not ln.lstrip().startswith("#")]
    if not rows:
        raise InputError(f"{path}: empty file")
    lineno, head = rows[0]
    if len(head) != 2:
        raise InputError(f"{path}: line {lineno}: header must be 'n m'")
    try:
        n, m = int(head[0]), int(head[1])
    except ValueError:
        raise InputError(f"{path}: line {lineno}: header must contain two integers") from None
    body = rows[1:]
    if len(body) != n:
        raise InputError(f"{path}: expected {n} rows after the header, found {len(body)}")
    out = np.empty((n, m))
    for r, (lineno, toks) in enumerate(body):
        if len(toks) != m:
            raise InputError(f"{path}: line {lineno}: expected {m} values, found {len(toks)}")
        for c, tok in enumerate(toks):
            try:
                out[r, c] = float(tok)
            except ValueError:
                raise InputError(f"{path}: line {lineno}, column {c + 1}: cannot parse {tok!r}") from None
    if not np.all(np.isfinite(out)):
        raise InputError(f"{path}: non-finite entries")
    return out


def _ctrl(args) -> SeriesControl:
    return replace(DEFAULT_CONTROL, max_order=args.max_order, rel_tol=args.rel_tol)


def _spec(args, n=None, m=None) -> ModelSpec:
    n = args.n if args.n is not None else n
    m = args.m if args.m is not None else m
    if n is None or m is None:
        raise InputError("--n and --m are required")
    if (args.n is not None and n != args.n) or (args.m is not None and m != args.m):
        raise InputError(f"--n/--m ({args.n}, {args.m}) disagree with the input ({n}, {m})")
    if n - m < 2:
        raise InputError(f"dimension constraint n - m >= 2 violated (n={n}, m={m})")
    return ModelSpec(n, m, args.v1, args.v2)


def _emit(obj, out):
    text = json.dumps(obj, indent=2)
    if out:
        with open(out, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)


def cmd_estimate(args) -> int:
    x = read_matrix(args.input)
    if args.n is not None and args.n != x.shape[0] or args.m is not None and args.m != x.shape[1]:
        raise InputError(f"--n/--m ({args.n}, {args.m}) disagree with the input shape {x.shape}")
    spec = _spec(args, *x.shape)
    ctrl = _ctrl(args)
    methods = [m for chunk in (args.method or ["mle"]) for m in chunk.split(",")]
    reports = []
    for method in methods:
        if method == "mle":
            rep = est.mle(spec, x)
        elif method == "em":
            rep = est.efron_morris(spec, x, spec.v1)
        elif method == "em-plus":
            rep = est.efron_morris(spec, x, spec.v1, positive_part=True)
        elif method == "js":
            rep = est.james_stein(spec, x, spec.v1)
        elif method in ("svs-bayes", "stein-bayes"):
            kind = priors.Svs if method == "svs-bayes" else priors.Stein
            rep = est.bayes_estimate(kind, spec, x, spec.v1, ctrl)
        else:
            raise InputError(f"unknown method {method!r}; choose from {', '.join(ESTIMATE_METHODS)}")
        reports.append({"method": method, "estimator_id": rep.estimator_id,
                        "estimate": rep.estimate.tolist(),
                        "singular_values": singular_values(rep.estimate).tolist(),
                        "diagnostics": rep.diagnostics})
    _emit({"n": spec.n, "m": spec.m, "v1": spec.v1, "input": x.tolist(),
           "input_singular_values": svd(x)[1].tolist(), "estimates": reports}, args.out)
    return EXIT_OK


def cmd_bench(args) -> int:
    if args.experiment:
        exp = rb.load_experiment(args.experiment)
    elif args.preset:
        exp = rb.preset(args.preset)
    else:
        raise InputError("give --experiment FILE or --preset figK")
    over = {}
    if args.replications is not None:
        over["replications"] = args.replications
    if args.seed is not None:
        over["master_seed"] = args.seed
    if args.method:
        over["methods"] = tuple(m for chunk in args.method for m in chunk.split(","))
    if args.max_order != DEFAULT_CONTROL.max_order or args.rel_tol != DEFAULT_CONTROL.rel_tol:
        over["ctrl"] = _ctrl(args)
    spec_over = {k: getattr(args, k) for k in ("n", "m") if getattr(args, k) is not None}
    if args.v1_set or args.v2_set:
        spec_over.update(v1=args.v1, v2=args.v2)
    if spec_over:
        over["spec"] = ModelSpec(**{**exp.spec.__dict__, **spec_over})
    exp = replace(exp, **over) if over else exp
    table = rb.run_experiment(exp)
    text = table.to_csv(args.out)
    if not args.out:
        sys.stdout.write(text)
    for line in table.summary():
        print(line, file=sys.stderr if not args.out else sys.stdout)
    base = "mle" if exp.task == rb.ESTIMATION else "uniform"
    status = EXIT_OK
    if base in exp.methods:
        for method in exp.methods:
            if method == base:
                continue
            wins = 0
            for g in exp.grid:
                d, se = table.paired_difference(g, base, method)
                wins += d >= 3 * se
            print(f"{method} below {base} by >= 3 paired se at {wins}/{len(exp.grid)} grid points",
                  file=sys.stderr if not args.out else sys.stdout)
            if args.check_dominance and method == "svs" and wins < len(exp.grid):
                status = EXIT_FAIL
    if any(r.flags for r in table.rows):
        status = EXIT_FAIL
    return status


def _random_points(spec: ModelSpec, count: int, rng, min_sigma=0.05, min_gap=1e-3):
    pts, skipped = [], 0
    while len(pts) < count:
        p = rng.standard_normal(spec.shape) * 2.0
        s = singular_values(p)
        if s[-1] < min_sigma or (spec.m > 1 and np.min(-np.diff(s)) < min_gap):
            skipped += 1
            continue
        pts.append(p)
    return pts, skipped


def cmd_check_superharmonic(args) -> int:
    spec = _spec(args, 4, 2)
    rng = replication_rng(args.seed if args.seed is not None else 0, 0)
    pts, skipped = _random_points(spec, args.points, rng)
    prior = args.prior
    if prior == "svs":
        kind = priors.Svs
    elif prior == "regularized":
        kind = priors.PriorKind.regularized(args.k)
    elif prior == "stein":
        kind = priors.Stein
    else:
        raise InputError(f"unknown prior {prior!r}")

    def field_fn(x):
        return np.exp(priors.log_prior(kind, spec, x))

    results, failures = [], 0
    r = spec.n - spec.m - 1
    for idx, p in enumerate(pts):
        sec = priors.fd_second_differences(field_fn, p, vectorized=True)
        lap = float(sec.sum())
        budget = 1e-3 * float(np.abs(sec).sum())
        entry = {"index": idx, "fd_laplacian": lap, "budget": budget}
        if prior == "regularized":
            ok = lap < 0
        else:
            ok = abs(lap) <= budget
        if prior == "svs":
            s = singular_values(p)
            grad = -r * np.prod(s ** -r) / s
            hess = r * (r + 1) * np.prod(s ** -r) / s**2
            sv = priors.sv_laplacian(s, spec, grad, hess)
            entry["sv_laplacian"] = sv
            ok = ok and abs(sv) <= 1e-8 * max(1.0, float(np.prod(s ** -r)) / s[-1] ** 2)
        if args.sphere_draws:
            sa = priors.sphere_average_test(field_fn, p, 0.05 * singular_values(p)[-1], args.sphere_draws,
                                            replication_rng(args.seed or 0, 1, idx), vectorized=True)
            entry.update(sphere_average=sa.average, center_value=sa.center_value, sphere_se=sa.std_error)
            ok = ok and sa.superharmonic_ok()
        entry["ok"] = bool(ok)
        failures += not ok
        results.append(entry)
    report = {"prior": prior, "n": spec.n, "m": spec.m, "points": len(pts),
              "excluded_near_singular": skipped, "failures": failures, "results": results}
    if args.out:
        _emit(report, args.out)
    print(f"{prior}: {len(pts) - failures}/{len(pts)} points pass ({skipped} near-degenerate draws excluded)")
    return EXIT_OK if failures == 0 else EXIT_FAIL


def cmd_hypergeom(args) -> int:
    eig = [float(v) for chunk in args.eigenvalues for v in chunk.replace(",", " ").split()]
    if not eig:
        raise InputError("--eigenvalues is required")
    ctrl = _ctrl(args)
    if args.method:
        ctrl = replace(ctrl, method=args.method[0])
    res = hyp1f1_matrix(args.a, args.b, eig, ctrl)
    out = {"a": args.a, "b": args.b, "eigenvalues": eig, "value": res.value, "log_value": res.log_value,
           "converged": res.converged, "terms_used": res.terms_used, "method": res.method}
    print(f"value {res.value!r}")
    print(f"log_value {res.log_value!r}")
    print(f"converged {str(res.converged).lower()}")
    print(f"terms_used {res.terms_used}")
    print(f"method {res.method}")
    if args.out:
        _emit(out, args.out)
    return EXIT_OK if res.converged else EXIT_FAIL


class _Mark(argparse.Action):
    """Store the value and remember that the flag was given."""

    def __call__(self, parser, ns, values, option_string=None):
        setattr(ns, self.dest, values)
        setattr(ns, self.dest + "_set", True)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--n", type=int)
    common.add_argument("--m", type=int)
    common.add_argument("--v1", type=float, default=1.0, action=_Mark)
    common.add_argument("--v2", type=float, default=1.0, action=_Mark)
    common.add_argument("--method", action="append")
    common.add_argument("--seed", type=int)
    common.add_argument("--replications", type=int)
    common.add_argument("--max-order", type=int, default=DEFAULT_CONTROL.max_order)
    common.add_argument("--rel-tol", type=float, default=DEFAULT_CONTROL.rel_tol)
    common.add_argument("--out")
    common.set_defaults(v1_set=False, v2_set=False)

    p = argparse.ArgumentParser(prog="svshrink", description="Singular value shrinkage priors for matrix means.")
    sub = p.add_subparsers(dest="command", required=True)

    e = sub.add_parser("estimate", parents=[common], help="estimate a mean matrix from a matrix file")
    e.add_argument("input")
    e.set_defaults(func=cmd_estimate)

    b = sub.add_parser("bench", parents=[common], help="run a Monte Carlo risk experiment")
    b.add_argument("--experiment")
    b.add_argument("--preset")
    b.add_argument("--check-dominance", action="store_true")
    b.set_defaults(func=cmd_bench)

    c = sub.add_parser("check-superharmonic", parents=[common], help="numerical superharmonicity checks")
    c.add_argument("--prior", default="svs", choices=("svs", "regularized", "stein"))
    c.add_argument("--k", type=int, default=5)
    c.add_argument("--points", type=int, default=100)
    c.add_argument("--sphere-draws", type=int, default=0)
    c.set_defaults(func=cmd_check_superharmonic)

    h = sub.add_parser("hypergeom", parents=[common], help="evaluate 1F1(a; b; S) from eigenvalues of S")
    h.add_argument("--a", type=float, required=True)
    h.add_argument("--b", type=float, required=True)
    h.add_argument("--eigenvalues", action="append", default=[])
    h.set_defaults(func=cmd_hypergeom)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (InputError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (ShrinkageError, ValueError) as exc:
        detail = f" (terms_used={exc.terms_used})" if getattr(exc, "terms_used", None) is not None else ""
        print(f"error: {exc}{detail}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
