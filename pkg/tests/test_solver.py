"""Tests for the interior-point driver, tracing and barrier continuation."""
import json
import math

import numpy as np
import pytest

from noisyipm.invariants import InvariantMonitor, TrueDiagnostics
from noisyipm.problem import NoiseSpec, NoisyOracle, TrueProblem, get_problem, scale_problem
from noisyipm.solver import (TRACE_COLUMNS, IterationRecord, SolverConfig, SolveStatus,
                             continuation_loop, initial_state, next_mu, read_trace_csv,
                             reduction_threshold, should_reduce_mu, solve_barrier_subproblem,
                             write_summary_json, write_trace_csv)


def _bound_problem():
    """min x subject to x >= 1, written as 1 - x <= 0."""
    return TrueProblem("bound1d", 1, 1, [3.0], lambda x: float(x[0]), lambda x: np.ones(1),
                       lambda x: np.array([1.0 - x[0]]), lambda x: np.array([[-1.0]]),
                       lambda x, y: np.zeros((1, 1)))


def _solve(problem, mu=1e-4, eps=0.0, seed=0, observers=(), **kw):
    oracle = NoisyOracle(problem, NoiseSpec.from_level(eps, seed=seed))
    cfg = SolverConfig.for_noise(oracle.noise, mu=mu, **kw)
    return oracle, solve_barrier_subproblem(oracle, cfg, initial_state(oracle, cfg), observers)


def _record(dm=1.0, **kw):
    base = dict(k=0, tau=0.1, alpha_max=1.0, alpha=1.0, j=0, dm=dm, merit_noisy=0.0,
                stat_kkt_noisy=0.0, stat_infeas_noisy=0.0, norm_g=1.0, norm_J=1.0, norm_c=1.0,
                norm_v=1.0, norm_d=1.0, norm_JTc=1.0, norm_y=1.0, eps_k=1e-16)
    base.update(kw)
    return IterationRecord(**base)


class TestSolverConfig:
    def test_defaults(self):
        cfg = SolverConfig()
        assert (cfg.tau_init, cfg.omega, cfg.sigma, cfg.delta_tau) == (0.1, 1e3, 0.1, 1e-4)
        assert (cfg.eta_phi, cfg.zeta, cfg.max_iter, cfg.tol_term) == (1e-8, 0.1, 2000, 0.0)
        assert cfg.eta_s_value == 0.99
        assert SolverConfig(mu=1e-4).eta_s_value == pytest.approx(0.9999)

    @pytest.mark.parametrize("kw", [dict(sigma=1.0), dict(delta_tau=0.0), dict(eta_phi=1.5),
                                    dict(omega=0.0), dict(zeta=-1.0), dict(tau_init=0.0),
                                    dict(mu=0.0), dict(eta_s=1.0), dict(max_iter=-1),
                                    dict(continuation=True, mu_min=1.0)])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            SolverConfig(**kw)


class TestSolveBarrierSubproblem:
    def test_central_path_point_of_bound(self):
        _, res = _solve(_bound_problem(), mu=1e-4, max_iter=200)
        assert abs(res.final_state.x[0] - (1.0 + 1e-4)) <= 1e-6
        assert res.final_state.s[0] == pytest.approx(1e-4, rel=1e-4)
        assert res.final_state.y[0] == pytest.approx(1.0, rel=1e-4)

    def test_infeasible_exit(self):
        oracle, res = _solve(get_problem("infeasible"), tol_term=1e-8)
        assert res.status is SolveStatus.INFEASIBLE_STATIONARY
        assert abs(res.final_state.x[0]) <= 1e-6
        assert np.all(oracle.evaluate_true(res.final_state.x).cI > 0)

    def test_stationary_exit(self):
        _, res = _solve(get_problem("hs35"), mu=1e-2, tol_term=1e-9)
        assert res.status is SolveStatus.STATIONARY
        assert res.iterations < 100

    def test_zero_budget(self):
        _, res = _solve(get_problem("lp2"), max_iter=0)
        assert res.status is SolveStatus.MAX_ITER and res.trace == []

    def test_time_limit(self):
        _, res = _solve(get_problem("lp2"), time_limit=0.0, max_iter=50)
        assert res.status is SolveStatus.TIME_LIMIT

    def test_failure_is_reported(self):
        bad = TrueProblem("nan", 1, 1, [0.0], lambda x: float(x[0]), lambda x: np.array([np.nan]),
                          lambda x: np.array([x[0] - 1.0]), lambda x: np.array([[1.0]]))
        _, res = _solve(bad, max_iter=5)
        assert res.status is SolveStatus.FAILURE
        assert res.message

    def test_bad_start_rejected(self):
        oracle = NoisyOracle(_bound_problem())
        cfg = SolverConfig()
        start = initial_state(oracle, cfg)
        start.s[:] = 0.0
        with pytest.raises(ValueError):
            solve_barrier_subproblem(oracle, cfg, start)

    def test_records_and_observers(self):
        prob = scale_problem(get_problem("hs76"))
        oracle = NoisyOracle(prob, NoiseSpec.from_level(1e-2, seed=3))
        mon = InvariantMonitor(oracle)
        cfg = SolverConfig.for_noise(oracle.noise, mu=1e-1, max_iter=150)
        res = solve_barrier_subproblem(oracle, cfg, initial_state(oracle, cfg),
                                       [TrueDiagnostics(oracle), mon])
        assert res.iterations == 150 and mon.iterations == 150
        assert mon.total == 0, mon.examples
        taus = [r.tau for r in res.trace]
        assert all(b <= a for a, b in zip(taus, taus[1:]))
        for r in res.trace:
            assert r.dm >= 0.0 and r.alpha == r.alpha_max * 0.5 ** r.j
            assert all(math.isfinite(getattr(r, c)) for c in TRACE_COLUMNS)
        assert [r.k for r in res.trace] == list(range(150))

    def test_noise_free_merit_nonincreasing(self):
        _, res = _solve(scale_problem(get_problem("qp_nw")), mu=1e-1, max_iter=60)
        # The accepted step satisfies the Armijo test with allowance 2.1e-16.
        phis = [r.merit_noisy for r in res.trace]
        taus = [r.tau for r in res.trace]
        for k in range(len(phis) - 1):
            if taus[k + 1] == taus[k]:
                assert phis[k + 1] <= phis[k] + 1e-14 * (1 + abs(phis[k]))


class TestTraceIO:
    def test_round_trip_and_header(self, tmp_path):
        _, res = _solve(scale_problem(get_problem("hs21")), mu=1e-1, eps=1e-2, max_iter=30)
        path = tmp_path / "t.csv"
        write_trace_csv(res.trace, path)
        assert path.read_text().splitlines()[0] == ",".join(TRACE_COLUMNS)
        rows = read_trace_csv(path)
        assert len(rows) == 30
        for row, rec in zip(rows, res.trace):
            for col in TRACE_COLUMNS:
                got, want = row[col], getattr(rec, col)
                assert got == want or (math.isnan(got) and math.isnan(want))

    def test_summary_json(self, tmp_path):
        _, res = _solve(get_problem("lp2"), max_iter=5)
        write_summary_json(res, tmp_path / "s.json", problem="lp2")
        data = json.loads((tmp_path / "s.json").read_text())
        assert data["status"] == "MaxIter" and data["iterations"] == 5
        assert data["problem"] == "lp2" and set(TRACE_COLUMNS) <= set(data["final"])

    def test_replay_is_bit_identical(self, tmp_path):
        paths = []
        for i in range(2):
            _, res = _solve(scale_problem(get_problem("rosen_disk")), mu=1e-1, eps=1e-2, seed=5,
                            max_iter=80)
            paths.append(tmp_path / f"{i}.csv")
            write_trace_csv(res.trace, paths[-1])
        assert paths[0].read_bytes() == paths[1].read_bytes()


class TestContinuation:
    def test_next_mu_rule(self):
        assert next_mu(1e-1, SolverConfig()) == pytest.approx(0.02)
        assert next_mu(1e-2, SolverConfig()) == pytest.approx(1e-3)  # 1e-2^1.5 < 2e-3
        assert next_mu(2e-6, SolverConfig(mu_min=1e-6)) == 1e-6

    def test_zero_reduction_fires(self):
        assert should_reduce_mu([_record(dm=0.0)], SolverConfig())

    def test_large_reduction_does_not_fire(self):
        assert not should_reduce_mu([_record(dm=10.0)], SolverConfig())

    def test_empty_tail(self):
        assert not should_reduce_mu([], SolverConfig())

    def test_threshold_grows_with_noise(self):
        quiet = reduction_threshold([_record()], SolverConfig())
        noisy = reduction_threshold([_record(eps_f=1e-2, eps_c=1e-2, eps_g=0.1, eps_J=0.1,
                                             eps_k=1e-2)], SolverConfig())
        assert quiet == pytest.approx(1e-12 + 2.1e-16)
        assert noisy > 1e-2

    def test_fires_on_noise_free_convergence(self):
        prob = scale_problem(get_problem("hs35"))
        oracle = NoisyOracle(prob)
        cfg = SolverConfig(mu=1e-2, max_iter=300)
        res = solve_barrier_subproblem(oracle, cfg, initial_state(oracle, cfg),
                                       stop_test=lambda tr: should_reduce_mu(tr, cfg))
        assert res.status is SolveStatus.THRESHOLD
        assert res.iterations < 300

    def test_single_subproblem_at_floor(self):
        oracle = NoisyOracle(get_problem("lp2"))
        cfg = SolverConfig(mu=1e-6, mu_min=1e-6, continuation=True, max_iter=300)
        assert len(continuation_loop(oracle, cfg)) == 1

    def test_requires_flag(self):
        with pytest.raises(ValueError):
            continuation_loop(NoisyOracle(get_problem("lp2")), SolverConfig())

    def test_mu_sequence_and_warm_start(self):
        oracle = NoisyOracle(scale_problem(get_problem("qp_nw")))
        cfg = SolverConfig(mu=1e-1, mu_min=1e-6, continuation=True)
        firsts = {}

        def first_iterate(detail):
            firsts.setdefault(detail.state.mu, (detail.state.x.copy(), detail.state.y.copy(),
                                                detail.state.s.copy()))

        results = continuation_loop(oracle, cfg, observers=[first_iterate])
        mus = [r.final_state.mu for r in results]
        expected = [1e-1]
        while expected[-1] > 1e-6:
            expected.append(next_mu(expected[-1], cfg))
        np.testing.assert_allclose(mus, expected)
        for prev, cur in zip(results, results[1:]):
            x, y, s = firsts[cur.final_state.mu]
            np.testing.assert_array_equal(x, prev.final_state.x)
            np.testing.assert_array_equal(s, prev.final_state.s)
            np.testing.assert_allclose(y, cur.final_state.mu / s)
        np.testing.assert_allclose(results[-1].final_state.x, [1.4, 1.7], atol=1e-4)

    def test_budget_respected(self):
        oracle = NoisyOracle(scale_problem(get_problem("hs43")), NoiseSpec.from_level(1e-2))
        cfg = SolverConfig.for_noise(oracle.noise, mu=1e-1, mu_min=1e-6, continuation=True,
                                     max_iter=40, max_total_iter=100)
        results = continuation_loop(oracle, cfg)
        assert sum(r.iterations for r in results) <= 100
