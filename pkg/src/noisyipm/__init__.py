"""Noise-tolerant line-search interior-point method for inequality-constrained problems."""
from .barrier import BarrierState, ScaledSystem, assemble, init_slacks, slack_reset
from .problem import (Keying, NoiseSpec, NoisyEvaluation, NoisyOracle, TrueProblem, evaluate_noisy,
                      get_problem, load_problem_config, problem_names, sample_ball, scale_problem)
from .solver import (IterationRecord, SolveResult, SolverConfig, SolveStatus, continuation_loop,
                     initial_state, should_reduce_mu, solve_barrier_subproblem)

__all__ = [
    "BarrierState", "ScaledSystem", "assemble", "init_slacks", "slack_reset",
    "Keying", "NoiseSpec", "NoisyEvaluation", "NoisyOracle", "TrueProblem", "evaluate_noisy",
    "get_problem", "load_problem_config", "problem_names", "sample_ball", "scale_problem",
    "IterationRecord", "SolveResult", "SolverConfig", "SolveStatus", "continuation_loop",
    "initial_state", "should_reduce_mu", "solve_barrier_subproblem",
]
__version__ = "0.1.0"
