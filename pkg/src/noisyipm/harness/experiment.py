"""Grid runner over (problem, mu, noise level, seed) cells."""
from __future__ import annotations

import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

from ..invariants import InvariantMonitor, TrueDiagnostics
from ..problem import NoiseSpec, NoisyOracle, get_problem, scale_problem
from ..solver import SolverConfig, SolveStatus, initial_state, solve_barrier_subproblem, write_trace_csv
from .metrics import MEASURES, default_thresholds, geometric_mean_tail, profile, write_profile_csv
from .suite import suite_names


@dataclass
class ExperimentGrid:
    problems: Sequence[str] = field(default_factory=lambda: suite_names("default"))
    mus: Sequence[float] = (1e-1, 1e-4)
    noise_levels: Sequence[float] = (1e-2, 1e-6)
    seeds: Sequence[int] = (0,)
    max_iter: int = 2000
    time_limit: float = 3600.0
    check_invariants: bool = False

    def noise(self, level: float, seed: int) -> NoiseSpec:
        """``eps_f = eps_c = level`` and ``eps_g = eps_J = eps_H = sqrt(level)``."""
        return NoiseSpec.from_level(level, seed=seed)

    def cells(self) -> list[tuple[str, float, float, int]]:
        return [(p, mu, eps, seed) for p in self.problems for mu in self.mus
                for eps in self.noise_levels for seed in self.seeds]


@dataclass
class RunSummary:
    problem: str
    mu: float
    eps_f: float
    seed: int
    geo_kkt_noisy: float = math.nan
    geo_infeas_noisy: float = math.nan
    geo_kkt_true: float = math.nan
    geo_infeas_true: float = math.nan
    status: str = ""
    iters: int = 0
    wall_time: float = 0.0
    message: str = ""
    invariant_violations: Optional[dict] = None
    noise_audit: Optional[dict] = None

    def to_json(self) -> dict:
        return asdict(self)


def cell_name(problem: str, mu: float, eps: float, seed: int) -> str:
    return f"{problem}_mu{mu:.0e}_eps{eps:.0e}_seed{seed}"


def run_cell(problem: str, mu: float, eps: float, seed: int, *, max_iter: int = 2000,
             time_limit: float = 3600.0, check_invariants: bool = False,
             out_dir: Optional[str] = None, keep_trace: bool = False):
    """Solve one cell on the scaled problem; returns ``(RunSummary, trace or None)``."""
    summary = RunSummary(problem=problem, mu=mu, eps_f=eps, seed=seed)
    monitor = None
    try:
        noise = NoiseSpec.from_level(eps, seed=seed)
        oracle = NoisyOracle(scale_problem(get_problem(problem)), noise)
        cfg = SolverConfig.for_noise(noise, mu=mu, max_iter=max_iter, time_limit=time_limit)
        observers = [TrueDiagnostics(oracle)]
        if check_invariants:
            monitor = InvariantMonitor(oracle)
            observers.append(monitor)
        start = initial_state(oracle, cfg)
        res = solve_barrier_subproblem(oracle, cfg, start, observers)
    except Exception as exc:  # a failed cell must not stop the grid
        summary.status = SolveStatus.FAILURE.value
        summary.message = f"{type(exc).__name__}: {exc}"
        res = None
    trace = res.trace if res is not None else []
    if res is not None:
        summary.status = res.status.value
        summary.iters = res.iterations
        summary.wall_time = res.wall_time
        summary.message = res.message
    if trace:
        for key, attr in (("geo_kkt_noisy", "stat_kkt_noisy"), ("geo_infeas_noisy", "stat_infeas_noisy"),
                          ("geo_kkt_true", "stat_kkt_true"), ("geo_infeas_true", "stat_infeas_true")):
            setattr(summary, key, geometric_mean_tail([getattr(r, attr) for r in trace]))
    if monitor is not None:
        summary.invariant_violations = dict(monitor.violations)
        summary.noise_audit = dict(monitor.noise_audit)
    if out_dir is not None:
        base = Path(out_dir) / cell_name(problem, mu, eps, seed)
        write_trace_csv(trace, f"{base}.csv")
        with open(f"{base}.json", "w") as fh:
            json.dump(summary.to_json(), fh, indent=2)
    return summary, (trace if keep_trace else None)


def _run_cell_star(args):
    cell, kwargs = args
    return run_cell(*cell, **kwargs)[0]


def run_grid(grid: ExperimentGrid, parallelism: int = 1, out_dir: Optional[str] = None) -> list[RunSummary]:
    """Run every cell of ``grid``; summaries come back in cell order.

    Cells are independent and fully seeded, so results do not depend on
    ``parallelism``.  With ``out_dir`` each cell writes ``<cell>.csv`` and
    ``<cell>.json`` and the grid writes one profile CSV per (mu, eps, measure).
    """
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
    kwargs = dict(max_iter=grid.max_iter, time_limit=grid.time_limit,
                  check_invariants=grid.check_invariants, out_dir=out_dir)
    jobs = [(cell, kwargs) for cell in grid.cells()]
    if parallelism <= 1:
        summaries = [_run_cell_star(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=parallelism) as pool:
            summaries = list(pool.map(_run_cell_star, jobs))
    if out_dir is not None:
        write_profiles(summaries, out_dir)
    return summaries


def write_profiles(summaries: Sequence[RunSummary], out_dir, thresholds=None) -> list[Path]:
    thresholds = thresholds if thresholds is not None else default_thresholds()
    paths = []
    keys = sorted({(s.mu, s.eps_f) for s in summaries})
    for mu, eps in keys:
        group = [s for s in summaries if s.mu == mu and s.eps_f == eps]
        for measure in MEASURES:
            path = Path(out_dir) / f"profile_mu{mu:.0e}_eps{eps:.0e}_{measure}.csv"
            write_profile_csv(profile(group, measure, thresholds), path, measure)
            paths.append(path)
    with open(Path(out_dir) / "summaries.json", "w") as fh:
        json.dump([s.to_json() for s in summaries], fh, indent=2)
    return paths


def default_jobs() -> int:
    return max(1, (os.cpu_count() or 1))
