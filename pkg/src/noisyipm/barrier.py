"""Slack-variable log-barrier formulation.

With slacks ``s > 0`` the barrier subproblem is

    min f0(x) - mu * sum(log s)  s.t.  cI(x) + s = 0,

and the algorithm works with the combined iterate ``z = (x, s)`` and the
slack-scaled derivatives ``g = [g0; -mu e]`` and ``J = [JI  S]``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .problem import NoisyEvaluation

# A slack reset can produce a zero slack in floating point.
S_MIN = 1e-12


class BarrierDomainError(ValueError):
    """Raised when the barrier is evaluated at a nonpositive slack."""


@dataclass
class BarrierState:
    x: np.ndarray
    s: np.ndarray
    y: np.ndarray
    tau: float
    mu: float
    k: int = 0

    @property
    def z(self) -> np.ndarray:
        return np.concatenate([self.x, self.s])

    def copy(self) -> "BarrierState":
        return BarrierState(self.x.copy(), self.s.copy(), self.y.copy(),
                            self.tau, self.mu, self.k)


@dataclass
class ScaledSystem:
    f: float
    c: np.ndarray
    g: np.ndarray
    J: np.ndarray
    # Pieces kept for callers that need the unscaled blocks.
    cI: np.ndarray = field(repr=False, default=None)
    s: np.ndarray = field(repr=False, default=None)

    @property
    def JTc(self) -> np.ndarray:
        return self.J.T @ self.c


def barrier_objective(f0: float, s: np.ndarray, mu: float) -> float:
    if np.any(s <= 0.0):
        raise BarrierDomainError("barrier undefined for nonpositive slacks")
    return float(f0 - mu * np.sum(np.log(s)))


def assemble(ev: NoisyEvaluation, s: np.ndarray, mu: float) -> ScaledSystem:
    """Build ``f, c, g, J`` of the barrier subproblem from an evaluation."""
    s = np.asarray(s, dtype=float)
    if mu <= 0.0:
        raise ValueError("mu must be positive")
    f = barrier_objective(ev.f0, s, mu)
    q = s.size
    c = ev.cI + s
    g = np.concatenate([ev.g0, np.full(q, -mu)])
    J = np.hstack([ev.JI, np.diag(s)])
    return ScaledSystem(f=f, c=c, g=g, J=J, cI=ev.cI, s=s)


def slack_reset(s_cand: np.ndarray, cI_next: np.ndarray, s_min: float = S_MIN) -> np.ndarray:
    """``max(s_cand, -cI_next, s_min)`` componentwise.

    Never decreases a slack and leaves ``cI_next + s >= 0``.
    """
    return np.maximum(np.maximum(s_cand, -np.asarray(cI_next)), s_min)


def init_slacks(oracle, x0: np.ndarray, s_min: float = S_MIN) -> np.ndarray:
    """Unit slacks followed by a reset against the noisy ``cI(x0)``.

    The evaluation is keyed as iteration 0, so the first iteration sees the
    same constraint values and starts with ``c(z0) >= 0``.
    """
    ev = oracle.evaluate(x0, 0, parts="fc")
    return slack_reset(np.ones(oracle.q), ev.cI, s_min)
