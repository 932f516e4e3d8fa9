"""Solver configuration."""

from dataclasses import dataclass, field

from .fem import LpsConfig

__all__ = ["SolverConfig"]


@dataclass(frozen=True)
class SolverConfig:
    tol: float = 1e-6
    restart: int = 10
    maxit: int = 500
    inner_steps: int = 5
    cheb_steps: int = 20
    mg_cycles_velocity: int = 4
    mg_cycles_pressure: int = 2
    mg_smoothing: int = 1         # ILU(0) sweeps before and after coarse correction
    epsilon: float = 1e-4
    lps: LpsConfig = field(default_factory=LpsConfig)
    oseen_max: int = 20
    oseen_tol: float = 1e-5
    exact_blocks: bool = False   # sparse direct sub-solves instead of MG/Chebyshev

    def __post_init__(self):
        for name in ("tol", "epsilon", "oseen_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        for name in ("restart", "maxit", "inner_steps", "cheb_steps",
                     "mg_cycles_velocity", "mg_cycles_pressure", "mg_smoothing",
                     "oseen_max"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be a positive integer")
