"""Command line entry point: plan a scenario, sweep the collision weight, export built-ins."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .baseline import solve_centralized
from .model import HyperParams, ScenarioError
from .planner import plan_decentralized
from .scenario_io import emit, load_scenario, save_scenario
from .scenarios import builtin

# ADMM penalties and inner iterations that work well for each built-in
BUILTIN_HYPER = {
    "t-junction": dict(sigma=0.1, rho=0.01, inner_iters=2),
    "intersection": dict(sigma=0.01, rho=0.001, inner_iters=3),
}


def _resolve(args) -> tuple:
    if args.scenario:
        spec, hyper = load_scenario(args.scenario)
    else:
        spec = builtin(args.builtin)
        family = "t-junction" if args.builtin == "t-junction" else "intersection"
        hyper = HyperParams(**BUILTIN_HYPER[family])
    overrides = {k: getattr(args, k) for k in ("sigma", "rho", "inner_iters", "outer_tol",
                                              "max_outer_iters") if getattr(args, k) is not None}
    if overrides:
        hyper = HyperParams(**{**hyper.__dict__, **overrides})
    if args.beta is not None:
        spec = spec.replace(beta=args.beta)
    return spec, hyper


def _solve(spec, hyper, args):
    if args.solver == "centralized":
        return solve_centralized(spec, hyper)
    return plan_decentralized(spec, hyper, threads=args.threads, timeout=args.timeout)


def _summary(result) -> dict:
    return {"solver": result.solver, "N": result.N, "outer_iters": result.outer_iters,
            "converged": result.converged, "final_cost": result.final_cost,
            "min_distance": result.min_distance, "wall_time": result.wall_time}


def cmd_plan(args) -> int:
    spec, hyper = _resolve(args)
    result = _solve(spec, hyper, args)
    files = emit(result, args.out, spec, hyper, plots=not args.no_plots)
    print(json.dumps(_summary(result), indent=1))
    print(f"wrote {len(files)} files to {args.out}", file=sys.stderr)
    return 0


def cmd_sweep(args) -> int:
    spec, hyper = _resolve(args)
    out = Path(args.out)
    rows = []
    for beta in args.betas:
        result = _solve(spec.replace(beta=beta), hyper, args)
        emit(result, out / f"beta_{beta:g}", spec.replace(beta=beta), hyper,
             plots=not args.no_plots)
        rows.append({"beta": beta, **_summary(result)})
        print(f"beta={beta:g} iters={result.outer_iters} cost={result.final_cost:.3f} "
              f"min_d={result.min_distance:.3f}")
    out.mkdir(parents=True, exist_ok=True)
    (out / "sweep.json").write_text(json.dumps(rows, indent=1))
    return 0


def cmd_export(args) -> int:
    spec = builtin(args.builtin)
    family = "t-junction" if args.builtin == "t-junction" else "intersection"
    save_scenario(spec, args.path, HyperParams(**BUILTIN_HYPER[family]))
    print(f"wrote {args.path}", file=sys.stderr)
    return 0


def _add_problem_args(p: argparse.ArgumentParser) -> None:
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--scenario", type=Path, help="scenario JSON file")
    src.add_argument("--builtin", help="t-junction or intersection[:N]")
    p.add_argument("--solver", choices=("decentralized", "centralized"), default="decentralized")
    p.add_argument("--sigma", type=float)
    p.add_argument("--rho", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--inner-iters", dest="inner_iters", type=int)
    p.add_argument("--outer-tol", dest="outer_tol", type=float)
    p.add_argument("--max-outer-iters", dest="max_outer_iters", type=int)
    p.add_argument("--threads", type=int, default=1,
                   help="1 runs agents inline, >= N gives each agent a thread")
    p.add_argument("--timeout", type=float, default=30.0, help="per-round exchange timeout (s)")
    p.add_argument("--out", type=Path, default=Path("out"))
    p.add_argument("--no-plots", action="store_true")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="coopplan", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("plan", help="solve one scenario and write results")
    _add_problem_args(p)
    p.set_defaults(func=cmd_plan)

    s = sub.add_parser("sweep-beta", help="solve the same scenario for several collision weights")
    _add_problem_args(s)
    s.add_argument("--betas", type=float, nargs="+", default=[1.00, 1.44, 1.96, 2.56])
    s.set_defaults(func=cmd_sweep)

    e = sub.add_parser("export-scenario", help="write a built-in scenario as JSON")
    e.add_argument("--builtin", required=True)
    e.add_argument("path", type=Path)
    e.set_defaults(func=cmd_export)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ScenarioError as exc:
        for d in exc.diagnostics:
            print(f"error: {d}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
