"""Merit function, merit-parameter update and the noise-relaxed line search."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .barrier import BarrierDomainError, BarrierState, barrier_objective
from .steps import KktResult

J_MAX = 60
EPS_K_FLOOR = 1e-16


class LineSearchError(RuntimeError):
    pass


@dataclass
class MeritModel:
    tau: float
    f: float
    g: np.ndarray
    c: np.ndarray
    Jv_residual: float
    gTd: float
    uWu: float
    # Bounds on |g'd| and |u'Wu| before cancellation (||g|| ||d|| and
    # ||u|| ||Wu||); they size the roundoff allowance in ``update_tau``.
    gTd_bound: Optional[float] = None
    uWu_bound: Optional[float] = None

    @property
    def c_norm(self) -> float:
        return float(np.linalg.norm(self.c))

    @property
    def linear_decrease(self) -> float:
        """``||c|| - ||c + Jv||``."""
        return self.c_norm - self.Jv_residual


@dataclass
class LineSearchOutcome:
    alpha_max: float
    alpha: float
    j: int
    phi_old: float
    phi_new: float
    eps_k: float
    x_trial: np.ndarray = None
    s_trial: np.ndarray = None
    cI_trial: np.ndarray = None


def merit_value(f: float, c, tau: float) -> float:
    """``tau * f + ||c||_2``."""
    return tau * f + float(np.linalg.norm(c))


def model_reduction(mm: MeritModel) -> float:
    """``-tau g'd + ||c|| - ||c + Jv||``."""
    return -mm.tau * mm.gTd + mm.linear_decrease


def eps_k(tau: float, eps_f: float, eps_c: float, floor: float = EPS_K_FLOOR) -> float:
    """Noise allowance ``tau eps_f + eps_c`` of the relaxed Armijo test.

    Floored so the relaxed condition stays satisfiable with exact evaluations.
    """
    return max(tau * eps_f + eps_c, floor)


def tau_trial(mm: MeritModel, sigma: float) -> float:
    denom = mm.gTd + 0.5 * mm.uWu
    # Roundoff level for the denominator: near a stationary point both
    # terms are O(||d||^2) and the sign of their sum is noise.
    noise = 64 * np.finfo(float).eps * (abs(mm.gTd) + 0.5 * abs(mm.uWu))
    if denom <= noise:
        return math.inf
    num = (1.0 - sigma) * mm.linear_decrease
    if num <= 0.0:
        if mm.linear_decrease < -1e-10 * max(mm.c_norm, 1.0):
            raise RuntimeError("normal step increased the linearized infeasibility")
        return math.inf
    return num / denom


def update_tau(tau_prev: float, mm: MeritModel, sigma: float, delta_tau: float) -> float:
    """Merit-parameter update; returns ``tau_prev`` or a strictly smaller value.

    A decrease is at least by the factor ``1 - delta_tau`` and never below
    what the model-reduction condition needs.
    """
    trial = tau_trial(mm, sigma)
    tau = tau_prev if tau_prev <= trial else min((1.0 - delta_tau) * tau_prev, trial)
    if not tau > 0.0:
        raise RuntimeError(f"merit parameter update produced {tau}")
    # Certify dm >= tau/2 u'Wu + sigma (||c|| - ||c + Jv||) up to roundoff.
    dm = -tau * mm.gTd + mm.linear_decrease
    need = 0.5 * tau * mm.uWu + sigma * mm.linear_decrease
    gd = abs(mm.gTd) if mm.gTd_bound is None else max(abs(mm.gTd), mm.gTd_bound)
    uw = abs(mm.uWu) if mm.uWu_bound is None else max(abs(mm.uWu), mm.uWu_bound)
    scale = tau * gd + mm.c_norm + 0.5 * tau * uw
    if dm < need - 1e-12 * scale:
        raise RuntimeError(f"model reduction {dm} below required {need}")
    return tau


def fraction_to_boundary(s, ds, eta_s: float) -> float:
    """Largest ``alpha`` in (0, 1] with ``s + alpha S ds >= (1 - eta_s) s``.

    With ``s > 0`` this is ``alpha ds_i >= -eta_s`` componentwise.
    """
    ds = np.asarray(ds)
    neg = ds < 0.0
    if not np.any(neg):
        return 1.0
    with np.errstate(over="ignore"):
        return float(min(1.0, np.min(eta_s / -ds[neg])))


def armijo_backtrack(oracle, state: BarrierState, phi_old: float, step: KktResult,
                     dm: float, alpha_max: float, *, eta_phi: float, zeta: float,
                     eps_k: float, j_max: int = J_MAX) -> LineSearchOutcome:
    """Backtrack ``alpha = alpha_max / 2^j`` until the relaxed Armijo test holds.

    Trial points move along the unscaled direction ``(d^x, S d^s)`` and are
    priced with fresh noisy evaluations (stream ``j + 1`` of iteration
    ``state.k``).  The test is

        phi(trial) <= phi_old - eta_phi alpha dm + (2 + zeta) eps_k.
    """
    if eps_k <= 0.0:
        raise ValueError("eps_k must be positive")
    n = state.x.size
    dx, ds = step.d[:n], step.d[n:]
    sds = state.s * ds
    slack = (2.0 + zeta) * eps_k
    alpha = alpha_max
    for j in range(j_max + 1):
        x_t = state.x + alpha * dx
        s_t = state.s + alpha * sds
        ev = oracle.evaluate(x_t, state.k, stream=j + 1, parts="fc")
        try:
            f_t = barrier_objective(ev.f0, s_t, state.mu)
        except BarrierDomainError:
            phi_t = math.inf
        else:
            phi_t = merit_value(f_t, ev.cI + s_t, state.tau)
        if phi_t <= phi_old - eta_phi * alpha * dm + slack:
            return LineSearchOutcome(alpha_max=alpha_max, alpha=alpha, j=j, phi_old=phi_old,
                                     phi_new=phi_t, eps_k=eps_k, x_trial=x_t, s_trial=s_t,
                                     cI_trial=ev.cI)
        alpha *= 0.5
    raise LineSearchError(f"relaxed Armijo condition failed after {j_max} backtracks")
