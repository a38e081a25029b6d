"""Per-iteration observers: noiseless diagnostics and invariant checks.

Both are harness-side.  The solver never sees what they compute; the
noiseless measures are written into the iteration record only.
"""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .barrier import assemble, barrier_objective
from .globalization import merit_value
from .solver import IterationDetail
from .steps import normal_step

TOL_KKT = 1e-8
DELTA_V = 1.0 - 1e-8
# Slack for comparisons of sums that cancel to O(eps) of their terms.
_ROUND = 1e-12


class TrueDiagnostics:
    """Fills ``stat_kkt_true`` and ``stat_infeas_true`` from noiseless values.

    The noiseless multiplier is the one the iteration would have produced
    from exact data with the same (modified) ``W``.
    """

    def __init__(self, oracle):
        self.oracle = oracle

    def __call__(self, detail: IterationDetail) -> None:
        st = detail.state
        ev = self.oracle.evaluate_true(st.x)
        sys = assemble(ev, st.s, st.mu)
        JTc = sys.J.T @ sys.c
        vbar = normal_step(sys, detail.config.omega).v
        W = detail.kkt.W_used
        q, m = sys.J.shape
        K = np.zeros((m + q, m + q))
        K[:m, :m] = W
        K[:m, m:] = sys.J.T
        K[m:, :m] = sys.J
        rhs = np.concatenate([-sys.g, sys.J @ vbar])
        try:
            sol = np.linalg.solve(K, rhs)
        except np.linalg.LinAlgError:
            sol = np.linalg.lstsq(K, rhs, rcond=None)[0]
        ybar = sol[m:]
        rec = detail.record
        rec.stat_kkt_true = max(float(np.linalg.norm(sys.g + sys.J.T @ ybar)),
                                float(np.linalg.norm(sys.c)))
        rec.stat_infeas_true = float(np.linalg.norm(JTc))


@dataclass
class InvariantMonitor:
    """Counts violations of the per-iteration guarantees.

    ``oracle`` re-prices the accepted line-search trial point independently
    of the solver's own bookkeeping.
    """

    oracle: object = None
    violations: Counter = field(default_factory=Counter)
    examples: dict = field(default_factory=dict)
    iterations: int = 0
    prev_tau: float | None = None
    noise_audit: dict = field(default_factory=lambda: {"f": 0.0, "c": 0.0, "g": 0.0, "J": 0.0})

    def _fail(self, name, k, info):
        self.violations[name] += 1
        self.examples.setdefault(name, (k, info))

    @property
    def total(self) -> int:
        return sum(self.violations.values())

    def __call__(self, d: IterationDetail) -> None:
        self.iterations += 1
        k = d.record.k
        cfg = d.config
        st, nxt, sys, kkt, nrm, ls = d.state, d.next_state, d.system, d.kkt, d.normal, d.line_search
        n = st.x.size
        J, c, g = sys.J, sys.c, sys.g
        c_norm = float(np.linalg.norm(c))

        if not (np.all(st.s > 0) and np.all(nxt.s > 0)):
            self._fail("slack_positive", k, float(min(st.s.min(), nxt.s.min())))
        c_next = d.next_evaluation.cI + nxt.s
        if np.any(c_next < 0.0):
            self._fail("c_nonnegative", k, float(c_next.min()))

        # KKT block rows and the J d = J v identity.
        Wd, JTy = kkt.W_used @ kkt.d, J.T @ kkt.y_next
        r1 = np.linalg.norm(Wd + JTy + g)
        if not r1 <= TOL_KKT * (1.0 + np.linalg.norm(g) + np.linalg.norm(Wd) + np.linalg.norm(JTy)):
            self._fail("kkt_dual_residual", k, float(r1))
        Jv = J @ nrm.v
        r2 = np.linalg.norm(J @ kkt.d - Jv)
        if not r2 <= TOL_KKT * (1.0 + np.linalg.norm(Jv)):
            self._fail("kkt_primal_residual", k, float(r2))
        gap = abs(np.linalg.norm(c + J @ kkt.d) - np.linalg.norm(c + Jv))
        if not gap <= TOL_KKT * (1.0 + c_norm):
            self._fail("Jd_equals_Jv", k, float(gap))
        uWu = float(kkt.u @ kkt.W_used @ kkt.u)
        if not uWu >= cfg.pd_tol * float(kkt.u @ kkt.u):
            self._fail("tangential_curvature", k, uWu)

        # Normal step: radius, linearized decrease, Cauchy decrease.
        JTc = J.T @ c
        jtc = float(np.linalg.norm(JTc))
        if not np.linalg.norm(nrm.v) <= cfg.omega * jtc * (1.0 + 1e-10):
            self._fail("normal_radius", k, float(np.linalg.norm(nrm.v)))
        lin = np.linalg.norm(c + Jv)
        if not lin <= c_norm * (1.0 + _ROUND):
            self._fail("normal_no_worse", k, float(lin - c_norm))
        if jtc > 0.0:
            JJTc = J @ JTc
            denom = float(JJTc @ JJTc)
            a_hat = min(cfg.omega, jtc ** 2 / denom) if denom > 0 else cfg.omega
            cauchy = c_norm - np.linalg.norm(c - a_hat * JJTc)
            if not c_norm - lin >= DELTA_V * cauchy - _ROUND * c_norm:
                self._fail("cauchy_decrease", k, float(c_norm - lin - cauchy))

        # Merit parameter and model reduction condition.
        tau = d.record.tau
        if not (tau > 0.0 and tau <= d.tau_prev):
            self._fail("tau_monotone", k, (d.tau_prev, tau))
        elif tau < d.tau_prev and not tau <= (1.0 - cfg.delta_tau) * d.tau_prev * (1 + 1e-15):
            self._fail("tau_decrease_rule", k, (d.tau_prev, tau))
        mm = d.merit_model
        dm = d.record.dm
        lin_dec = c_norm - float(np.linalg.norm(c + Jv))
        rhs = 0.5 * tau * uWu + cfg.sigma * lin_dec
        scale = tau * abs(mm.gTd) + c_norm + 0.5 * tau * abs(uWu)
        if not dm >= rhs - _ROUND * scale:
            self._fail("model_reduction_condition", k, (dm, rhs))
        if not dm >= -_ROUND * scale:
            self._fail("dm_nonnegative", k, dm)

        # Fraction to the boundary at the accepted step.
        ds = kkt.d[n:]
        s_trial = st.s + ls.alpha * st.s * ds
        # 1 + alpha ds_i cancels near the boundary, so the slack is absolute in units of s.
        if np.any(s_trial < (1.0 - d.eta_s - 1e-13) * st.s):
            self._fail("fraction_to_boundary", k, float(np.min(s_trial / st.s)))

        # Relaxed Armijo, re-priced from a fresh evaluation with the same key.
        if self.oracle is not None:
            ev = self.oracle.evaluate(ls.x_trial, st.k, stream=ls.j + 1, parts="fc")
            phi_t = merit_value(barrier_objective(ev.f0, s_trial, st.mu), ev.cI + s_trial, tau)
            phi_0 = merit_value(sys.f, c, tau)
            bound = phi_0 - cfg.eta_phi * ls.alpha * dm + (2.0 + cfg.zeta) * ls.eps_k
            if not phi_t <= bound + _ROUND * (abs(phi_0) + 1.0):
                self._fail("relaxed_armijo", k, (phi_t, bound))
            # Slack reset does not increase the merit function (same cI).
            cI_next = d.next_evaluation.cI
            phi_cand = merit_value(barrier_objective(0.0, ls.s_trial, st.mu), cI_next + ls.s_trial, tau)
            phi_reset = merit_value(barrier_objective(0.0, nxt.s, st.mu), cI_next + nxt.s, tau)
            if not phi_reset <= phi_cand + _ROUND * (abs(phi_cand) + 1.0):
                self._fail("slack_reset_merit", k, (phi_reset, phi_cand))
            self._audit(d)

        if not all(math.isfinite(v) for v in (d.record.dm, d.record.stat_kkt_noisy,
                                               d.record.stat_infeas_noisy, d.record.merit_noisy)):
            self._fail("finite_record", k, None)

    def _audit(self, d: IterationDetail) -> None:
        """Realized noise at the iterate against the configured bounds."""
        oracle = self.oracle
        nz = oracle.noise
        ev, true = d.evaluation, oracle.evaluate_true(d.state.x)
        errs = {
            "f": abs(ev.f0 - true.f0),
            "c": float(np.linalg.norm(ev.cI - true.cI)),
            "g": float(np.linalg.norm(ev.g0 - true.g0)),
            "J": float(np.linalg.norm(ev.JI - true.JI, 2)) if ev.JI.size else 0.0,
        }
        bounds = {"f": nz.eps_f, "c": nz.eps_c, "g": nz.eps_g, "J": nz.eps_J}
        for key, err in errs.items():
            self.noise_audit[key] = max(self.noise_audit[key], err)
            if err > bounds[key] * (1.0 + 1e-12) + 1e-15 * (1.0 + abs(true.f0)):
                self._fail(f"noise_bound_{key}", d.record.k, err)
