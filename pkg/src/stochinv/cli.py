"""Command line interface: ``stochinv {gen,rate,invert,bench}``.

Exit codes: 0 success, 2 configuration error, 3 numerical failure, 4 I/O error.
"""

import argparse
import json
import logging
import os
import sys

import numpy as np

from .bench import BenchmarkSpec, MethodSpec, run_benchmark, weight_from_name, write_csv, write_svg
from .driver import METHODS, InverterConfig, Termination, run_inverter
from .errors import ConfigError, DivergenceError, MatrixFormatError, StochInvError
from .io import resolve_matrix, write_matrix_market
from .rates import iteration_complexity, rho
from .sketching import DiscreteSampling, resolve_probabilities

RATE_LIMIT_N = 5000
PROBABILITY_CHOICES = ("uniform", "convenient", "optimized", "heuristic")

log = logging.getLogger("stochinv")


def _seed(args):
    if args.seed is not None:
        return args.seed
    env = os.environ.get("STOCHINV_SEED")
    if env is None:
        return 0
    try:
        return int(env)
    except ValueError:
        raise ConfigError(f"STOCHINV_SEED must be an integer, got {env!r}") from None


def _add_common(p, methods=True, multi=False):
    p.add_argument("--matrix", required=True,
                   help="Matrix Market path, synthetic:N[:SEED], identity:N or libsvm:PATH[:LAMBDA]")
    if methods:
        if multi:
            p.add_argument("--method", action="append", choices=METHODS, required=True,
                           help="method to run (repeatable)")
        else:
            p.add_argument("--method", choices=METHODS, default="row")
        p.add_argument("--q", type=int, help="sketch width (default ceil(sqrt(n)))")
        p.add_argument("--sketch", choices=("block", "coordinate", "gaussian"), default="block")
        p.add_argument("--probabilities", choices=PROBABILITY_CHOICES)
        p.add_argument("--weight", choices=("identity", "inv-a", "a2", "gram-left", "gram-right"),
                       default="identity")
    p.add_argument("--seed", type=int, help="random seed (falls back to STOCHINV_SEED, then 0)")


def _add_run(p):
    p.add_argument("--tol", type=float, default=1e-2)
    p.add_argument("--max-iters", type=int, default=10_000)
    p.add_argument("--time-budget", type=float, help="seconds of stepping before giving up")
    p.add_argument("--init", choices=("method", "identity"), default="method")
    p.add_argument("--residual-every", type=int, default=10)
    p.add_argument("--out-csv")
    p.add_argument("--out-svg")
    p.add_argument("--no-timing", action="store_true",
                   help="record zero seconds so the CSV is byte-reproducible")


def build_parser():
    parser = argparse.ArgumentParser(prog="stochinv", description="Stochastic iterative matrix inversion.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="write a matrix (e.g. synthetic) in Matrix Market format")
    _add_common(g, methods=False)
    g.add_argument("--out", required=True)

    r = sub.add_parser("rate", help="convergence rate of a sketching scheme")
    _add_common(r)
    r.add_argument("--force", action="store_true", help=f"allow n > {RATE_LIMIT_N}")
    r.add_argument("--eps", type=float, default=1e-2, help="target for the iteration estimate")

    i = sub.add_parser("invert", help="run one method")
    _add_common(i)
    _add_run(i)
    i.add_argument("--out-matrix", help="write the final iterate (Matrix Market)")

    b = sub.add_parser("bench", help="compare several methods on one matrix")
    _add_common(b, multi=True)
    _add_run(b)
    b.add_argument("--trials", type=int, default=1)
    return parser


def _method_spec(args, name):
    return MethodSpec(name, q=args.q, probabilities=args.probabilities, weight=args.weight, sketch=args.sketch)


def cmd_gen(args, out):
    A = resolve_matrix(args.matrix)
    try:
        write_matrix_market(args.out, A, symmetric=A.is_symmetric, comment=f"source {args.matrix}")
    except OSError as exc:
        raise MatrixFormatError(f"cannot write {args.out}: {exc.strerror}") from exc
    print(json.dumps({"n": A.n, "symmetry": A.symmetry, "out": args.out}), file=out)


def cmd_rate(args, out):
    A = resolve_matrix(args.matrix)
    if A.n > RATE_LIMIT_N and not args.force:
        raise ConfigError(f"rate computation is O(n^3); n={A.n} exceeds {RATE_LIMIT_N} (use --force)")
    spec = _method_spec(args, args.method)
    rule = spec.rule(A.n)
    if rule is None or not rule.is_discrete:
        raise ConfigError("rates are computed for discrete (coordinate or block) samplings only")
    if args.method not in ("row", "col", "sym", "kaczmarz", "bad-broyden", "psb", "aip", "bfgs"):
        raise ConfigError(f"no rate formula wired for {args.method}")
    W = {"aip": weight_from_name("inv-a"), "bfgs": weight_from_name("inv-a")}.get(
        args.method, weight_from_name(args.weight))
    side = "col" if args.method in ("col", "bad-broyden") else "row"
    if rule.probabilities == "optimized-heuristic":
        raise ConfigError("heuristic probabilities change every step and have no fixed rate")
    p = resolve_probabilities(rule, A, W, side)
    report = rho(A, W, DiscreteSampling(rule.members(), p), side)
    result = {
        "n": A.n,
        "method": args.method,
        "side": side,
        "weight": W.kind,
        "probabilities": rule.probabilities if isinstance(rule.probabilities, str) else "explicit",
        "rho": report.rho,
        "lower_bound": report.lower_bound,
        "kappa_2F": report.kappa_2F,
        "gamma_bound": report.gamma_bound,
        "iterations_estimate": iteration_complexity(args.eps, report.rho) if report.rho < 1 else None,
    }
    print(json.dumps(result, indent=2), file=out)


def cmd_invert(args, out):
    A = resolve_matrix(args.matrix)
    spec = _method_spec(args, args.method)
    config = InverterConfig(
        A, args.method, W=weight_from_name(args.weight), rule=spec.rule(A.n), tol=args.tol,
        max_iters=args.max_iters, seed=_seed(args), residual_every=args.residual_every,
        time_budget=args.time_budget, record_time=not args.no_timing, init=args.init,
    )
    try:
        state, term = run_inverter(config)
    except DivergenceError as exc:
        state, term = exc.state, Termination.DIVERGED
    from .bench import ConvergenceTrace

    trace = ConvergenceTrace(args.method, state.history, term.value)
    _write_artifacts([trace], args)
    if args.out_matrix:
        try:
            write_matrix_market(args.out_matrix, state.X)
        except OSError as exc:
            raise MatrixFormatError(f"cannot write {args.out_matrix}: {exc.strerror}") from exc
    print(json.dumps({
        "method": args.method, "status": term.value, "iterations": state.k,
        "residual": state.residual, "flops": state.history[-1].flops,
    }), file=out)
    return 3 if term is Termination.DIVERGED else 0


def cmd_bench(args, out):
    spec = BenchmarkSpec(
        args.matrix, [_method_spec(args, m) for m in args.method], tol=args.tol, max_iters=args.max_iters,
        time_budget=args.time_budget, seed=_seed(args), trials=args.trials, init=args.init,
        residual_every=args.residual_every, record_time=not args.no_timing,
    )
    traces = run_benchmark(spec)
    _write_artifacts(traces, args)
    for tr in traces:
        print(json.dumps({
            "method": tr.label, "status": tr.status, "residual": tr.final_residual, "flops": tr.final_flops,
        }), file=out)


def _write_artifacts(traces, args):
    try:
        if args.out_csv:
            write_csv(traces, args.out_csv)
        if args.out_svg:
            write_svg(traces, args.out_svg)
    except OSError as exc:
        raise MatrixFormatError(f"cannot write output: {exc.strerror}") from exc


COMMANDS = {"gen": cmd_gen, "rate": cmd_rate, "invert": cmd_invert, "bench": cmd_bench}


def main(argv=None, out=None):
    out = sys.stdout if out is None else out
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code else 0
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command != "gen":
            args.seed = _seed(args)
        code = COMMANDS[args.command](args, out)
    except StochInvError as exc:
        print(f"stochinv: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except np.linalg.LinAlgError as exc:
        print(f"stochinv: numerical error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"stochinv: I/O error: {exc}", file=sys.stderr)
        return 4
    return code or 0


if __name__ == "__main__":
    sys.exit(main())
