"""Tests for the merit function, merit parameter and relaxed line search."""
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from noisyipm.barrier import BarrierState, ScaledSystem
from noisyipm.globalization import (LineSearchError, MeritModel, armijo_backtrack, eps_k,
                                    fraction_to_boundary, merit_value, model_reduction,
                                    tau_trial, update_tau)
from noisyipm.problem import NoisyEvaluation
from noisyipm.steps import KktResult, build_W, inertia_correct_and_solve, normal_step


def _mm(tau=1.0, gTd=-1.0, uWu=1.0, c=(2.0,), jv=1.0):
    return MeritModel(tau=tau, f=0.0, g=np.zeros(1), c=np.asarray(c, float), Jv_residual=jv,
                      gTd=gTd, uWu=uWu)


class ScriptedOracle:
    """Serves prescribed ``f0`` values per line-search stream; ``cI`` is ``-s``."""

    def __init__(self, f_by_stream, q=1):
        self.f_by_stream = f_by_stream
        self.q = q
        self.calls = []

    def evaluate(self, x, k=0, *, stream=0, parts="all", y=None):
        self.calls.append((k, stream))
        f = self.f_by_stream[stream] if callable(self.f_by_stream) is False else self.f_by_stream(x)
        return NoisyEvaluation(f0=f, cI=-np.ones(self.q))


def _state(tau=1.0, k=3):
    return BarrierState(x=np.zeros(1), s=np.ones(1), y=np.ones(1), tau=tau, mu=0.1, k=k)


def _step(dx=1.0, ds=0.0):
    d = np.array([dx, ds])
    return KktResult(d=d, u=d, y_next=np.zeros(1), W_used=np.eye(2), modification_shift=0.0,
                     attempts=1)


class TestMeritValue:
    def test_arithmetic(self):
        assert merit_value(2.0, np.array([3.0, 0.0, 0.0]), 0.1) == pytest.approx(3.2)

    def test_feasible(self):
        assert merit_value(-4.0, np.zeros(3), 0.5) == -2.0

    def test_norm(self):
        assert merit_value(0.0, np.array([3.0, 4.0]), 1.0) == 5.0


class TestModelReduction:
    def test_zero_step(self):
        assert model_reduction(_mm(gTd=0.0, c=(2.0,), jv=2.0)) == 0.0

    def test_plug_in(self):
        assert model_reduction(_mm(tau=1.0, gTd=-1.0, c=(2.0,), jv=1.0)) == 2.0


class TestTau:
    def test_nonpositive_denominator_keeps_tau(self):
        mm = _mm(gTd=-1.0, uWu=1.0)
        assert tau_trial(mm, 0.1) == math.inf
        assert update_tau(0.3, mm, 0.1, 1e-4) == 0.3

    def test_trial_above_previous(self):
        # trial = 0.9 * 1 / (1 + 0.5) = 0.6 > 0.1
        mm = _mm(gTd=1.0, uWu=1.0, c=(2.0,), jv=1.0)
        assert tau_trial(mm, 0.1) == pytest.approx(0.6)
        assert update_tau(0.1, mm, 0.1, 1e-4) == 0.1

    def test_jump_to_trial(self):
        # trial = 0.9 * 0.05 / 0.9 = 0.05
        mm = _mm(gTd=0.4, uWu=1.0, c=(1.0,), jv=0.95)
        assert tau_trial(mm, 0.1) == pytest.approx(0.05)
        assert update_tau(0.1, mm, 0.1, 1e-4) == pytest.approx(0.05)

    def test_minimum_decrease_factor(self):
        # trial just below tau_prev: the decrease is at least the factor 1 - delta_tau.
        mm = _mm(gTd=0.9, uWu=0.0, c=(1.0,), jv=0.9)  # trial = 0.09 / 0.9 = 0.1
        tau = update_tau(0.1 + 1e-9, mm, 0.1, 1e-4)
        assert tau == pytest.approx((1 - 1e-4) * (0.1 + 1e-9), rel=1e-15)

    def test_roundoff_at_converged_point(self):
        # c = 0 and d ~ 1e-16: g'd has the wrong sign purely from cancellation.
        mm = MeritModel(tau=0.1, f=0.0, g=np.ones(2), c=np.zeros(1), Jv_residual=0.0,
                        gTd=3.5e-32, uWu=1.5e-32)
        with pytest.raises(RuntimeError):
            update_tau(0.1, mm, 0.1, 1e-4)
        mm.gTd_bound, mm.uWu_bound = 2.5e-16, 1e-32
        assert update_tau(0.1, mm, 0.1, 1e-4) == 0.1

    @given(st.integers(0, 2**32 - 1), st.floats(1e-6, 1.0))
    @settings(max_examples=200, deadline=None)
    def test_reduction_condition_holds(self, seed, tau_prev):
        # Inputs come from genuine normal-step and KKT solves.
        rng = np.random.default_rng(seed)
        n, q = int(rng.integers(1, 5)), int(rng.integers(1, 4))
        s = rng.uniform(0.1, 2.0, q)
        J = np.hstack([rng.standard_normal((q, n)), np.diag(s)])
        c = rng.standard_normal(q) * 10.0 ** rng.uniform(-6, 1)
        g = rng.standard_normal(n + q)
        sys = ScaledSystem(f=0.0, c=c, g=g, J=J)
        nrm = normal_step(sys, 1e3)
        H = rng.standard_normal((n, n))
        kkt = inertia_correct_and_solve(build_W(H + H.T, s, rng.uniform(0.01, 1.0, q), 0.1),
                                        sys, nrm.v)
        mm = MeritModel(tau=tau_prev, f=0.0, g=g, c=c, Jv_residual=nrm.predicted_residual,
                        gTd=float(g @ kkt.d), uWu=float(kkt.u @ kkt.W_used @ kkt.u))
        tau = update_tau(tau_prev, mm, 0.1, 1e-4)
        assert 0.0 < tau <= tau_prev
        if tau < tau_prev:
            assert tau <= (1 - 1e-4) * tau_prev
        mm.tau = tau
        dm = model_reduction(mm)
        need = 0.5 * tau * mm.uWu + 0.1 * mm.linear_decrease
        assert dm >= need - 1e-12 * (tau * abs(mm.gTd) + mm.c_norm + tau * mm.uWu)
        assert dm >= -1e-12 * (tau * abs(mm.gTd) + mm.c_norm)


class TestFractionToBoundary:
    def test_no_blocking(self):
        assert fraction_to_boundary(np.ones(2), np.array([0.0, 3.0]), 0.99) == 1.0

    def test_componentwise(self):
        assert fraction_to_boundary(np.ones(2), np.array([-2.0, -0.5]), 0.99) == pytest.approx(0.495)

    def test_capped_at_one(self):
        assert fraction_to_boundary(np.ones(1), np.array([-0.5]), 0.99) == 1.0

    @given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=6), st.floats(0.5, 0.999))
    @settings(max_examples=200, deadline=None)
    def test_rule_holds(self, ds, eta):
        ds = np.array(ds)
        s = np.linspace(0.5, 3.0, ds.size)
        a = fraction_to_boundary(s, ds, eta)
        assert 0.0 < a <= 1.0
        assert np.all(s + a * s * ds >= (1 - eta) * s - 1e-13 * s)


class TestEpsK:
    def test_value(self):
        assert eps_k(0.1, 1e-2, 1e-3) == pytest.approx(2e-3)

    def test_floor(self):
        assert eps_k(0.1, 0.0, 0.0) == 1e-16


class TestArmijo:
    def test_relaxation_accepts_small_increase(self):
        # phi rises by 2 eps_k < (2 + zeta) eps_k at alpha_max.
        ek = 1e-3
        oracle = ScriptedOracle({1: 2 * ek, 2: -1.0})
        out = armijo_backtrack(oracle, _state(), 0.0, _step(), 1e-6, 1.0,
                               eta_phi=1e-8, zeta=0.1, eps_k=ek)
        assert out.j == 0 and out.alpha == 1.0

    def test_scripted_backtrack(self):
        ek = 1e-3
        oracle = ScriptedOracle({1: 10 * ek, 2: -0.5})
        out = armijo_backtrack(oracle, _state(k=7), 0.0, _step(), 1.0, 0.8,
                               eta_phi=1e-8, zeta=0.1, eps_k=ek)
        assert out.j == 1 and out.alpha == 0.4
        assert oracle.calls == [(7, 1), (7, 2)]
        np.testing.assert_allclose(out.x_trial, [0.4])

    def test_unscaled_slack_direction(self):
        state = BarrierState(x=np.zeros(1), s=np.array([2.0]), y=np.ones(1), tau=1.0, mu=0.1)
        oracle = ScriptedOracle({1: -10.0})
        out = armijo_backtrack(oracle, state, 0.0, _step(dx=0.0, ds=-0.25), 1.0, 1.0,
                               eta_phi=1e-8, zeta=0.1, eps_k=1e-3)
        np.testing.assert_allclose(out.s_trial, [1.5])

    def test_strongly_convex_quadratic_accepts_first_trial(self):
        # f = x^2 from x = 1 with d = -1 and a small alpha_max: the Armijo bound is met at j = 0.
        oracle = ScriptedOracle(lambda x: float(x[0] ** 2))
        state = BarrierState(x=np.ones(1), s=np.ones(1), y=np.ones(1), tau=1.0, mu=0.1)
        dm = 2.0  # -tau g'd with g = 2, d = -1
        out = armijo_backtrack(oracle, state, 1.0 + 1.0, _step(dx=-1.0), dm, 0.25,
                               eta_phi=1e-8, zeta=0.1, eps_k=1e-16)
        assert out.j == 0
        assert out.phi_new <= out.phi_old - 1e-8 * 0.25 * dm

    def test_exhaustion_raises(self):
        oracle = ScriptedOracle(lambda x: 1e9)
        with pytest.raises(LineSearchError):
            armijo_backtrack(oracle, _state(), 0.0, _step(), 1.0, 1.0,
                             eta_phi=1e-8, zeta=0.1, eps_k=1e-3, j_max=5)

    def test_rejects_zero_allowance(self):
        with pytest.raises(ValueError):
            armijo_backtrack(ScriptedOracle({}), _state(), 0.0, _step(), 1.0, 1.0,
                             eta_phi=1e-8, zeta=0.1, eps_k=0.0)
