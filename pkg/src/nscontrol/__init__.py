"""Preconditioned all-at-once solvers for stationary and instationary Navier-Stokes control."""

from .config import SolverConfig
from .fem import Discretization, LpsConfig
from .problems import ProblemSpec, make_problem
from .report import RunReport, convergence_order, write_report_csv

__all__ = ["SolverConfig", "Discretization", "LpsConfig", "ProblemSpec", "make_problem",
           "RunReport", "convergence_order", "write_report_csv", "run_experiment"]

__version__ = "0.1.0"


def run_experiment(spec, config, level):
    """Solve ``spec`` at ``level``; returns ``(report, state)``."""
    from .cli import run_experiment as _run
    return _run(spec, config, level)
