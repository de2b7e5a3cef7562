"""Command-line entry point: ``semiflow run|check|certify-slow|validate``.

Exit codes: 0 success, 1 certification or invariance failure, 2 input error,
3 solver failure.
"""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .errors import BlowUpError, ScenarioError, SolverError
from .expr import EvalError, Expression
from .invariance import certify_slow
from .scenario import check_scenario, load_scenario, run

EXIT_OK, EXIT_FAIL, EXIT_INPUT, EXIT_SOLVER = 0, 1, 2, 3
OUT_DIR_ENV = "SEMIFLOW_OUT_DIR"


def _rngs(seed: int, n: int) -> list:
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n)]


def _run_one(path: str, out_dir, svg, steps, child_seed) -> tuple[int, list[str]]:
    try:
        sc = load_scenario(path)
        if steps is not None:
            sc = sc.with_steps(steps)
        rep = run(sc, out_dir=out_dir, svg=svg, rng=np.random.default_rng(child_seed))
        return rep.exit_code, rep.lines()
    except (ScenarioError, EvalError) as exc:
        return EXIT_INPUT, [f"{path}: input error: {exc}"]
    except (SolverError, BlowUpError) as exc:
        return EXIT_SOLVER, [f"{path}: solver failure: {exc}"]


def cmd_run(args) -> int:
    out_dir = args.out_dir or os.environ.get(OUT_DIR_ENV) or "."
    seeds = np.random.SeedSequence(args.seed).spawn(len(args.files))
    jobs = [(f, out_dir, True if args.svg else None, args.steps, s) for f, s in zip(args.files, seeds)]
    if args.parallel > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=args.parallel) as pool:
            results = list(pool.map(_run_one, *zip(*jobs)))
    else:
        results = [_run_one(*job) for job in jobs]
    for _, lines in results:
        if not args.quiet:
            print("\n".join(lines))
    return max(code for code, _ in results)


def cmd_check(args) -> int:
    worst = EXIT_OK
    for path, rng in zip(args.files, _rngs(args.seed, len(args.files))):
        try:
            sc = load_scenario(path)
            _, conditions, pointwise = check_scenario(sc, rng)
        except (ScenarioError, EvalError) as exc:
            print(f"{path}: input error: {exc}", file=sys.stderr)
            worst = max(worst, EXIT_INPUT)
            continue
        except (SolverError, BlowUpError) as exc:
            print(f"{path}: solver failure: {exc}", file=sys.stderr)
            worst = max(worst, EXIT_SOLVER)
            continue
        ok = conditions.passed and (pointwise is None or pointwise.passed)
        if not args.quiet:
            print(f"{path}: {'PASS' if ok else 'FAIL'}")
            print("\n".join(conditions.lines(1)))
            if pointwise is not None:
                print("\n".join(pointwise.lines(1)))
        worst = max(worst, EXIT_OK if ok else EXIT_FAIL)
    return worst


def cmd_certify_slow(args) -> int:
    try:
        expr = Expression.parse(args.beta).require({"x"}, "beta")
        report = certify_slow(lambda x: expr(x=x), args.gamma)
    except (ScenarioError, EvalError, ValueError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    if not args.quiet:
        print("\n".join(report.lines()))
        print(f"  min x/beta(x) = {report.meta.get('min_ratio', float('nan')):.6g}; "
              f"M = {report.meta['M']:g}, tau = {report.meta['tau']:g}")
    return EXIT_OK if report.passed else EXIT_FAIL


def cmd_validate(args) -> int:
    from .validation import run_validation

    results = run_validation()
    if not args.quiet:
        for name, ok, detail in results:
            print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
    return EXIT_OK if all(ok for _, ok, _ in results) else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="semiflow", description=__doc__.splitlines()[0])
    parser.add_argument("--quiet", action="store_true", help="suppress report output")
    parser.add_argument("--seed", type=int, default=0, help="seed for sampling families")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="check conditions, simulate and write series")
    p.add_argument("files", nargs="+")
    p.add_argument("--out-dir", default=None, help=f"output directory (default ${OUT_DIR_ENV} or .)")
    p.add_argument("--svg", action="store_true", help="also write SVG plots")
    p.add_argument("--steps", type=int, default=None, help="override the scenario step count")
    p.add_argument("--parallel", type=int, default=1, help="run scenarios in N processes")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("check", help="structural and pointwise conditions only")
    p.add_argument("files", nargs="+")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("certify-slow", help="certify x/beta(x) > gamma near 0")
    p.add_argument("--beta", required=True, help='expression in x, e.g. "x*ln(1+x)"')
    p.add_argument("--gamma", type=float, required=True)
    p.set_defaults(func=cmd_certify_slow)

    p = sub.add_parser("validate", help="run the oracle cross-checks")
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    # accept global flags after the subcommand as well
    argv = list(sys.argv[1:] if argv is None else argv)
    hoisted = []
    for flag in ("--quiet",):
        while flag in argv[1:]:
            argv.remove(flag)
            hoisted.append(flag)
    if "--seed" in argv[1:]:
        i = argv.index("--seed", 1)
        hoisted += argv[i:i + 2]
        del argv[i:i + 2]
    try:
        args = parser.parse_args(hoisted + argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
