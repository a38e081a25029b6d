"""Command-line entry point: ``noisyipm solve`` and ``noisyipm experiment``."""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .invariants import TrueDiagnostics
from .problem import NoiseSpec, NoisyOracle, get_problem, scale_problem
from .solver import (SolverConfig, continuation_loop, initial_state, solve_barrier_subproblem,
                     write_summary_json, write_trace_csv)


def _floats(text: str) -> list[float]:
    return [float(t) for t in text.split(",") if t.strip()]


def _ints(text: str) -> list[int]:
    return [int(t) for t in text.split(",") if t.strip()]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="noisyipm", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("solve", help="solve one barrier subproblem (or a continuation sequence)")
    sp.add_argument("--problem", required=True)
    sp.add_argument("--mu", type=float, default=1e-1)
    sp.add_argument("--eps-f", type=float, default=0.0)
    sp.add_argument("--eps-c", type=float, default=None, help="defaults to --eps-f")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--max-iter", type=int, default=2000)
    sp.add_argument("--continuation", action="store_true")
    sp.add_argument("--mu-min", type=float, default=1e-6)
    sp.add_argument("--tol-term", type=float, default=0.0)
    sp.add_argument("--no-scale", action="store_true", help="skip gradient-based problem scaling")
    sp.add_argument("--out", required=True, help="trace CSV path; the summary JSON goes alongside")

    ep = sub.add_parser("experiment", help="run a (problem, mu, noise, seed) grid")
    ep.add_argument("--suite", default="default")
    ep.add_argument("--mus", type=_floats, default=[1e-1, 1e-4])
    ep.add_argument("--noise", type=_floats, default=[1e-2, 1e-6])
    ep.add_argument("--seeds", type=_ints, default=[0])
    ep.add_argument("--max-iter", type=int, default=2000)
    ep.add_argument("--check-invariants", action="store_true")
    ep.add_argument("--out", required=True)
    ep.add_argument("--jobs", type=int, default=1)
    return parser


def cmd_solve(args) -> int:
    problem = get_problem(args.problem)
    if not args.no_scale:
        problem = scale_problem(problem)
    noise = NoiseSpec.from_level(args.eps_f, seed=args.seed, eps_c=args.eps_c)
    oracle = NoisyOracle(problem, noise)
    cfg = SolverConfig.for_noise(noise, mu=args.mu, max_iter=args.max_iter, tol_term=args.tol_term,
                                 continuation=args.continuation, mu_min=args.mu_min)
    observers = [TrueDiagnostics(oracle)]
    if args.continuation:
        results = continuation_loop(oracle, cfg, observers=observers)
    else:
        results = [solve_barrier_subproblem(oracle, cfg, initial_state(oracle, cfg), observers)]
    trace = [rec for r in results for rec in r.trace]
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_trace_csv(trace, out)
    write_summary_json(results[-1], out.with_suffix(".json"), problem=args.problem,
                       subproblems=len(results), total_iterations=len(trace))
    last = results[-1]
    print(f"{args.problem}: {last.status.value} after {len(trace)} iterations, mu={last.final_state.mu:g}")
    return 0


def cmd_experiment(args) -> int:
    from .harness.experiment import ExperimentGrid, run_grid
    from .harness.suite import suite_names

    grid = ExperimentGrid(problems=suite_names(args.suite), mus=args.mus, noise_levels=args.noise,
                          seeds=args.seeds, max_iter=args.max_iter,
                          check_invariants=args.check_invariants)
    summaries = run_grid(grid, parallelism=args.jobs, out_dir=args.out)
    for s in summaries:
        print(json.dumps({"problem": s.problem, "mu": s.mu, "eps_f": s.eps_f, "seed": s.seed,
                          "status": s.status, "geo_kkt_true": s.geo_kkt_true}))
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "solve":
        return cmd_solve(args)
    return cmd_experiment(args)


if __name__ == "__main__":
    sys.exit(main())
