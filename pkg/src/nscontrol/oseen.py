"""Oseen (Picard) outer loop shared by the three discretizations."""

import time

import numpy as np

from .config import SolverConfig
from .krylov import fgmres
from .report import RunReport

__all__ = ["oseen_loop", "solve_linear"]


def solve_linear(kkt, tol, config: SolverConfig):
    """FGMRES on the (possibly transformed) Oseen system of ``kkt``."""
    return fgmres(kkt.matvec, kkt.precondition, kkt.system_rhs(), tol=tol,
                  restart=config.restart, maxit=config.maxit)


def oseen_loop(problem, config: SolverConfig, state, assemble, report: RunReport,
               tol=None):
    """Stokes-control start followed by Oseen steps.

    ``assemble(state, stokes)`` returns a KKT object exposing ``residual_norm()``,
    ``matvec``, ``precondition``, ``system_rhs()`` and ``update(state, dx)``.
    The Stokes solve counts as Oseen step 1.
    """
    t0 = time.perf_counter()
    tol = config.tol if tol is None else tol
    kkt = assemble(state, True)
    ref = kkt.residual_norm()
    report.residual_history.append(1.0 if ref > 0 else 0.0)
    if ref == 0.0:
        report.fgmres_its.append(0)
        report.fgmres_converged.append(True)
        report.converged = True
        report.wall_s = time.perf_counter() - t0
        return state
    dx, stats = solve_linear(kkt, tol, config)
    state = kkt.update(state, dx)
    report.fgmres_its.append(stats.iterations)
    report.fgmres_converged.append(stats.converged)
    if problem.stokes:
        report.converged = stats.converged
        report.wall_s = time.perf_counter() - t0
        return state
    while True:
        kkt = assemble(state, False)
        res = kkt.residual_norm() / ref
        report.residual_history.append(res)
        if res <= config.oseen_tol:
            report.converged = True
            break
        if len(report.fgmres_its) >= config.oseen_max or not np.isfinite(res):
            report.converged = False
            break
        dx, stats = solve_linear(kkt, tol, config)
        state = kkt.update(state, dx)
        report.fgmres_its.append(stats.iterations)
        report.fgmres_converged.append(stats.converged)
    report.wall_s = time.perf_counter() - t0
    return state
