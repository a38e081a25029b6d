"""Line-search interior-point driver for noisy barrier subproblems.

One call to :func:`solve_barrier_subproblem` runs the fixed-``mu``
iteration; :func:`continuation_loop` chains such calls over a decreasing
sequence of barrier parameters.
"""
from __future__ import annotations

import csv
import enum
import json
import math
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from .barrier import BarrierDomainError, BarrierState, ScaledSystem, assemble, init_slacks, slack_reset
from .globalization import (LineSearchError, LineSearchOutcome, MeritModel, armijo_backtrack, eps_k,
                            fraction_to_boundary, merit_value, model_reduction, update_tau)
from .problem import NoisyEvaluation
from .steps import (InertiaCorrectionError, KktResult, TrustRegionResult, build_W,
                    inertia_correct_and_solve, normal_step)


class SolveStatus(str, enum.Enum):
    INFEASIBLE_STATIONARY = "InfeasibleStationary"
    STATIONARY = "Stationary"
    MAX_ITER = "MaxIter"
    TIME_LIMIT = "TimeLimit"
    FAILURE = "Failure"
    # Barrier-subproblem stopping test of the continuation loop fired.
    THRESHOLD = "Threshold"


@dataclass(frozen=True)
class SolverConfig:
    mu: float = 1e-1
    tau_init: float = 1e-1
    omega: float = 1e3
    sigma: float = 1e-1
    delta_tau: float = 1e-4
    eta_s: Optional[float] = None  # None: max(0.99, 1 - mu)
    eta_phi: float = 1e-8
    zeta: float = 1e-1
    eps_f: float = 0.0
    eps_c: float = 0.0
    # Derivative bounds; only the continuation threshold uses them.
    eps_g: float = 0.0
    eps_J: float = 0.0
    kappa_sigma: float = 1e10
    pd_tol: float = 1e-10
    max_iter: int = 2000
    time_limit: float = 3600.0
    tol_term: float = 0.0
    continuation: bool = False
    kappa_mu: float = 0.2
    theta_mu: float = 1.5
    mu_min: float = 1e-6
    mu_floor: float = 1e-12
    max_total_iter: Optional[int] = None

    def __post_init__(self):
        if not self.mu > 0.0:
            raise ValueError(f"mu must be positive, got {self.mu}")
        unit = {"sigma": self.sigma, "delta_tau": self.delta_tau,
                "eta_phi": self.eta_phi, "eta_s": self.eta_s_value}
        for name, value in unit.items():
            if not 0.0 < value < 1.0:
                raise ValueError(f"{name} must lie in (0, 1), got {value}")
        for name in ("mu", "tau_init", "omega", "zeta"):
            if not getattr(self, name) > 0.0:
                raise ValueError(f"{name} must be positive")
        if self.eps_f < 0 or self.eps_c < 0 or self.max_iter < 0:
            raise ValueError("noise bounds and max_iter must be nonnegative")
        if self.continuation and not 0.0 < self.mu_min <= self.mu:
            raise ValueError("continuation needs 0 < mu_min <= mu")

    @property
    def eta_s_value(self) -> float:
        return self.eta_s if self.eta_s is not None else max(0.99, 1.0 - self.mu)

    @classmethod
    def for_noise(cls, noise, **kwargs) -> "SolverConfig":
        """Config whose known noise bounds are taken from a :class:`NoiseSpec`."""
        return cls(eps_f=noise.eps_f, eps_c=noise.eps_c, eps_g=noise.eps_g,
                   eps_J=noise.eps_J, **kwargs)


TRACE_COLUMNS = ("k", "tau", "alpha_max", "alpha", "j", "dm", "merit_noisy",
                 "stat_kkt_noisy", "stat_infeas_noisy", "stat_kkt_true",
                 "stat_infeas_true", "shift", "mu")


@dataclass
class IterationRecord:
    k: int
    tau: float
    alpha_max: float
    alpha: float
    j: int
    dm: float
    merit_noisy: float
    stat_kkt_noisy: float
    stat_infeas_noisy: float
    stat_kkt_true: float = math.nan
    stat_infeas_true: float = math.nan
    shift: float = 0.0
    mu: float = math.nan
    # Not part of the CSV trace; used by the barrier-parameter test.
    norm_g: float = 0.0
    norm_J: float = 0.0
    norm_c: float = 0.0
    norm_v: float = 0.0
    norm_d: float = 0.0
    norm_JTc: float = 0.0
    norm_y: float = 0.0
    eps_k: float = 0.0
    eps_f: float = 0.0
    eps_c: float = 0.0
    eps_g: float = 0.0
    eps_J: float = 0.0


@dataclass
class IterationDetail:
    """Everything computed in one iteration, handed to observers."""

    state: BarrierState
    evaluation: NoisyEvaluation
    system: ScaledSystem
    normal: TrustRegionResult
    kkt: KktResult
    tau_prev: float
    merit_model: MeritModel
    line_search: LineSearchOutcome
    eta_s: float
    next_state: BarrierState
    next_evaluation: NoisyEvaluation
    record: IterationRecord
    config: SolverConfig


@dataclass
class SolveResult:
    status: SolveStatus
    final_state: BarrierState
    trace: list = field(default_factory=list)
    wall_time: float = 0.0
    message: str = ""

    @property
    def iterations(self) -> int:
        return len(self.trace)

    def summary(self) -> dict:
        last = self.trace[-1] if self.trace else None
        return {
            "status": self.status.value,
            "iterations": self.iterations,
            "mu": self.final_state.mu,
            "tau": self.final_state.tau,
            "final": None if last is None else {c: getattr(last, c) for c in TRACE_COLUMNS},
            "x": self.final_state.x.tolist(),
            "wall_time": self.wall_time,
            "message": self.message,
        }


Observer = Callable[[IterationDetail], None]


def initial_state(oracle, config: SolverConfig, x0=None) -> BarrierState:
    """Unit slacks reset against noisy ``cI(x0)``, ``y0 = mu / s0``, ``tau = tau_init``."""
    x0 = np.array(oracle.problem.x0 if x0 is None else x0, dtype=float)
    s0 = init_slacks(oracle, x0)
    return BarrierState(x=x0, s=s0, y=config.mu / s0, tau=config.tau_init, mu=config.mu, k=0)


def solve_barrier_subproblem(oracle, config: SolverConfig, start: BarrierState,
                             observers: Sequence[Observer] = (),
                             stop_test: Optional[Callable[[list], bool]] = None) -> SolveResult:
    """Run the noisy interior-point iteration for the barrier parameter ``start.mu``.

    Each iteration: termination test on ``||J'c||``, normal step, shifted
    primal-dual step, second termination test, merit-parameter update,
    fraction-to-the-boundary cap, relaxed Armijo backtracking, then the
    slack reset against the constraint values of the next iterate.  The
    termination tests use ``config.tol_term`` and are off when it is 0.
    ``stop_test(trace)`` is consulted after every iteration.
    """
    t0 = time.perf_counter()
    cfg = config
    mu = start.mu
    eta_s = cfg.eta_s if cfg.eta_s is not None else max(0.99, 1.0 - mu)
    state = start.copy()
    if np.any(state.s <= 0.0):
        raise ValueError("start slacks must be positive")
    trace: list[IterationRecord] = []

    def finish(status, message=""):
        return SolveResult(status, state, trace, time.perf_counter() - t0, message)

    if cfg.max_iter == 0:
        return finish(SolveStatus.MAX_ITER)

    delta_last = 0.0
    try:
        ev = oracle.evaluate(state.x, state.k, y=state.y)
        for _ in range(cfg.max_iter):
            if time.perf_counter() - t0 > cfg.time_limit:
                return finish(SolveStatus.TIME_LIMIT)
            sys = assemble(ev, state.s, mu)
            n = state.x.size
            JTc = sys.J.T @ sys.c
            infeas = float(np.linalg.norm(JTc))
            terminate = cfg.tol_term > 0.0 and infeas <= cfg.tol_term
            if terminate and np.any(ev.cI > 0.0):
                return finish(SolveStatus.INFEASIBLE_STATIONARY)

            normal = normal_step(sys, cfg.omega)
            H = ev.H if ev.H is not None else np.zeros((n, n))
            W = build_W(H, state.s, state.y, mu, cfg.kappa_sigma)
            kkt = inertia_correct_and_solve(W, sys, normal.v, pd_tol=cfg.pd_tol,
                                            delta_last=delta_last)
            delta_last = kkt.modification_shift
            dual = float(np.linalg.norm(sys.g + sys.J.T @ kkt.y_next))
            if terminate and dual <= cfg.tol_term:
                state = replace(state, y=kkt.y_next)
                return finish(SolveStatus.STATIONARY)

            c_norm = float(np.linalg.norm(sys.c))
            mm = MeritModel(tau=state.tau, f=sys.f, g=sys.g, c=sys.c,
                            Jv_residual=normal.predicted_residual,
                            gTd=float(sys.g @ kkt.d), uWu=float(kkt.u @ kkt.W_used @ kkt.u),
                            gTd_bound=float(np.linalg.norm(sys.g) * np.linalg.norm(kkt.d)),
                            uWu_bound=float(np.linalg.norm(kkt.u)
                                            * np.linalg.norm(kkt.W_used @ kkt.u)))
            tau = update_tau(state.tau, mm, cfg.sigma, cfg.delta_tau)
            mm.tau = tau
            dm = model_reduction(mm)
            alpha_max = fraction_to_boundary(state.s, kkt.d[n:], eta_s)
            ek = eps_k(tau, cfg.eps_f, cfg.eps_c)
            phi = merit_value(sys.f, sys.c, tau)
            moving = replace(state, tau=tau)
            ls = armijo_backtrack(oracle, moving, phi, kkt, dm, alpha_max,
                                  eta_phi=cfg.eta_phi, zeta=cfg.zeta, eps_k=ek)

            ev_next = oracle.evaluate(ls.x_trial, state.k + 1, y=kkt.y_next)
            s_next = slack_reset(ls.s_trial, ev_next.cI)
            next_state = BarrierState(ls.x_trial, s_next, kkt.y_next, tau, mu, state.k + 1)
            record = IterationRecord(
                k=state.k, tau=tau, alpha_max=alpha_max, alpha=ls.alpha, j=ls.j, dm=dm,
                merit_noisy=phi, stat_kkt_noisy=max(dual, c_norm), stat_infeas_noisy=infeas,
                shift=kkt.modification_shift, mu=mu,
                norm_g=float(np.linalg.norm(sys.g)), norm_J=float(np.linalg.norm(sys.J, 2)),
                norm_c=c_norm, norm_v=float(np.linalg.norm(normal.v)),
                norm_d=float(np.linalg.norm(kkt.d)), norm_JTc=infeas,
                norm_y=float(np.linalg.norm(kkt.y_next)), eps_k=ek,
                eps_f=cfg.eps_f, eps_c=cfg.eps_c, eps_g=cfg.eps_g, eps_J=cfg.eps_J,
            )
            if observers:
                detail = IterationDetail(state=moving, evaluation=ev, system=sys, normal=normal,
                                         kkt=kkt, tau_prev=state.tau, merit_model=mm,
                                         line_search=ls, eta_s=eta_s, next_state=next_state,
                                         next_evaluation=ev_next, record=record, config=cfg)
                for obs in observers:
                    obs(detail)
            trace.append(record)
            state, ev = next_state, ev_next
            if stop_test is not None and stop_test(trace):
                return finish(SolveStatus.THRESHOLD)
    except (InertiaCorrectionError, LineSearchError, BarrierDomainError,
            np.linalg.LinAlgError, RuntimeError, ValueError, FloatingPointError) as exc:
        return finish(SolveStatus.FAILURE, f"{type(exc).__name__}: {exc}")
    return finish(SolveStatus.MAX_ITER)


# ------------------------------------------------------------ continuation

def reduction_threshold(tail: Sequence[IterationRecord], config: SolverConfig) -> float:
    """Computable stand-in for the noise-level bound on the model reduction.

    With running maxima ``g_sup, J_sup, c_sup`` of the observed ``||g||,
    ||J||, ||c||`` and ``omega_k = ||J'c|| / ||v||`` (``omega`` when ``v = 0``)
    in place of ``omega``, the step-error estimate is

        eps_d = omega_k (J_sup eps_c + c_sup eps_J + eps_c eps_J)
                + omega_k (eps_g + eps_J ||y||),

    and with ``e1 = (tau eps_g + eps_J) eps_d + 2 eps_c``,
    ``e2 = tau eps_g + eps_J`` and ``c1 = (tau g_sup + J_sup) eps_d`` the
    threshold is

        2 (e1 + c1 + e2 ||d||) + (2 + zeta) eps_k + mu_floor.

    The ``||d||`` term stands for ``xi_d^{-1/2} dm^{1/2}`` with the observed
    ratio ``xi_d = dm / ||d||^2``.  The worst-case merit-parameter error term
    is omitted since no estimate of it is available during a run.
    """
    last = tail[-1]
    g_sup = max(r.norm_g for r in tail)
    J_sup = max(r.norm_J for r in tail)
    c_sup = max(r.norm_c for r in tail)
    ef, ec, eg, eJ = last.eps_f, last.eps_c, last.eps_g, last.eps_J
    omega_k = last.norm_JTc / last.norm_v if last.norm_v > 0.0 else config.omega
    eps_d = omega_k * (J_sup * ec + c_sup * eJ + ec * eJ) + omega_k * (eg + eJ * last.norm_y)
    tau = last.tau
    e1 = (tau * eg + eJ) * eps_d + 2.0 * ec
    e2 = tau * eg + eJ
    c1 = (tau * g_sup + J_sup) * eps_d
    return 2.0 * (e1 + c1 + e2 * last.norm_d) + (2.0 + config.zeta) * last.eps_k + config.mu_floor


def should_reduce_mu(tail: Sequence[IterationRecord], config: SolverConfig) -> bool:
    """True once the latest model reduction is below :func:`reduction_threshold`."""
    if not tail:
        return False
    return tail[-1].dm <= reduction_threshold(tail, config)


def next_mu(mu: float, config: SolverConfig) -> float:
    return max(config.mu_min, min(config.kappa_mu * mu, mu ** config.theta_mu))


def continuation_loop(oracle, config: SolverConfig, start: BarrierState | None = None,
                      observers: Sequence[Observer] = ()) -> list[SolveResult]:
    """Solve barrier subproblems for ``mu, next_mu(mu), ...`` down to ``mu_min``.

    Each subproblem stops when :func:`should_reduce_mu` fires (status
    ``THRESHOLD``) or on its own budget; the next one is warm-started from
    ``(x, s, tau)`` with ``y = mu / s`` and ``eta_s = max(0.99, 1 - mu)``.
    """
    if not config.continuation:
        raise ValueError("continuation is disabled in this config")
    state = start if start is not None else initial_state(oracle, config)
    budget = config.max_total_iter if config.max_total_iter is not None else 10 * config.max_iter
    results: list[SolveResult] = []
    mu = state.mu
    while True:
        sub_cfg = replace(config, mu=mu, eta_s=None,
                          max_iter=min(config.max_iter, max(budget, 0)))
        begin = replace(state, mu=mu, y=mu / state.s)
        res = solve_barrier_subproblem(oracle, sub_cfg, begin, observers,
                                       stop_test=lambda tr: should_reduce_mu(tr, sub_cfg))
        results.append(res)
        budget -= res.iterations
        state = res.final_state
        if res.status not in (SolveStatus.THRESHOLD, SolveStatus.MAX_ITER):
            break
        if mu <= config.mu_min or budget <= 0:
            break
        mu = next_mu(mu, config)
    return results


# ------------------------------------------------------------- serialization

def write_trace_csv(trace: Iterable[IterationRecord], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRACE_COLUMNS)
        for rec in trace:
            writer.writerow([repr(getattr(rec, c)) if isinstance(getattr(rec, c), float)
                             else getattr(rec, c) for c in TRACE_COLUMNS])


def read_trace_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    out = []
    for row in rows:
        out.append({k: (int(v) if k in ("k", "j") else float(v)) for k, v in row.items()})
    return out


def write_summary_json(result: SolveResult, path, **extra) -> None:
    payload = result.summary()
    payload.update(extra)
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, default=float)
