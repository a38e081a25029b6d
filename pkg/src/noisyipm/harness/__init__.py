from .experiment import ExperimentGrid, RunSummary, run_cell, run_grid
from .metrics import geometric_mean_tail, profile

__all__ = ["ExperimentGrid", "RunSummary", "run_cell", "run_grid", "geometric_mean_tail", "profile"]
