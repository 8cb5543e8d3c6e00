"""Command line entry point: ``psarp solve | sweep | check``."""
import argparse
import json
import logging
import sys
from pathlib import Path

from . import checks
from .errors import PsarpError
from .harness import GENERATORS, Experiment, run_sweep
from .problem import Problem
from .solver import SolverConfig, solve

CONFIG_FLAGS = ("theta", "eta", "gamma0", "gamma1", "gamma2", "sigma0", "varpi")


def _eps_list(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid eps list {text!r}") from None


def _write(path, text):
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def cmd_solve(args):
    doc = json.loads(Path(args.problem).read_text())
    problem = Problem.from_json(doc)
    overrides = {k: getattr(args, k) for k in CONFIG_FLAGS if getattr(args, k) is not None}
    cfg = SolverConfig(eps=args.eps, p=args.p, q=args.q, max_iter=args.max_iter, **overrides)
    rep = solve(problem, cfg)
    _write(args.out, json.dumps(rep.to_dict(), indent=2) + "\n")
    return 0 if rep.status in ("Converged", "ModelCriticalStop") else 2


def _generate(args):
    gen = GENERATORS[args.gen]
    if args.gen == "row-sparse":
        return gen(nu=args.groups, gamma=args.gsize, lam=args.lam, seed=args.seed, a=args.a)
    return gen(groups=args.groups, gsize=args.gsize, lam=args.lam, seed=args.seed, a=args.a)


def cmd_sweep(args):
    problem = _generate(args)
    exp = Experiment(problem, args.eps, {"p": args.p, "q": args.q})
    rep = run_sweep(exp)
    _write(args.out, rep.csv())
    if args.json:
        Path(args.json).write_text(rep.to_json() + "\n")
    return 0


def cmd_check(args):
    names = list(checks.SUITES) if args.suite == "all" else [args.suite]
    ok = True
    for name in names:
        for res in checks.SUITES[name]():
            print(f"[{name}] {res.line()}")
            ok &= res.passed
    return 0 if ok else 1


def build_parser():
    parser = argparse.ArgumentParser(prog="psarp", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    ps = sub.add_parser("solve", help="solve a problem given as JSON")
    ps.add_argument("--problem", required=True, help="problem JSON file")
    ps.add_argument("--eps", type=float, default=1e-4)
    ps.add_argument("--p", type=int, default=3)
    ps.add_argument("--q", type=int, default=1)
    ps.add_argument("--max-iter", type=int, default=10_000)
    for flag in CONFIG_FLAGS:
        ps.add_argument(f"--{flag}", type=float, default=None)
    ps.add_argument("--out", default="-", help="report JSON (default stdout)")
    ps.set_defaults(func=cmd_solve)

    pw = sub.add_parser("sweep", help="epsilon sweep on a generated instance")
    pw.add_argument("--gen", choices=sorted(GENERATORS), default="group-lasso")
    pw.add_argument("--groups", type=int, default=5)
    pw.add_argument("--gsize", type=int, default=4)
    pw.add_argument("--lambda", dest="lam", type=float, default=0.5)
    pw.add_argument("--a", type=float, default=0.5)
    pw.add_argument("--eps", type=_eps_list, default=[1e-1, 1e-2, 1e-3, 1e-4])
    pw.add_argument("--seed", type=int, default=7)
    pw.add_argument("--p", type=int, default=3)
    pw.add_argument("--q", type=int, default=1)
    pw.add_argument("--out", default="-", help="CSV output (default stdout)")
    pw.add_argument("--json", default=None, help="optional JSON report with slope and diagnostics")
    pw.set_defaults(func=cmd_sweep)

    pc = sub.add_parser("check", help="run a property suite")
    pc.add_argument("--suite", choices=sorted(checks.SUITES) + ["all"], default="all")
    pc.set_defaults(func=cmd_check)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG, format="%(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except (PsarpError, OSError, json.JSONDecodeError, KeyError) as exc:
        print(f"psarp: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
