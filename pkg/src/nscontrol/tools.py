"""Per-level solver building blocks shared by the stationary and transient solvers."""

from functools import lru_cache

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .chebyshev import MassSolver, estimate_mass_bounds
from .config import SolverConfig
from .fem import Discretization
from .multigrid import PinnedPressureSolver, build_hierarchy, mg_vcycle

__all__ = ["get_discretization", "LevelTools", "get_tools", "to_cols", "from_cols", "slot_apply",
           "blocks_apply", "velocity_cols", "velocity_flat", "desired_vector"]


@lru_cache(maxsize=None)
def get_discretization(level):
    return Discretization(level)


def to_cols(v, n_s):
    """(..., 2 n_s) velocity vectors -> (n_s, 2 * count) columns."""
    v = np.asarray(v, dtype=float).reshape(-1, n_s)
    return np.ascontiguousarray(v.T)


def from_cols(x, shape):
    return np.asarray(x).T.reshape(shape)


class _Exact:
    def __init__(self, a):
        self.lu = spla.splu(sp.csc_matrix(a))

    def __call__(self, r):
        return self.lu.solve(np.asarray(r, dtype=float))


class _Multigrid:
    def __init__(self, hierarchy):
        self.hierarchy = hierarchy

    def __call__(self, r):
        return mg_vcycle(self.hierarchy, r)


class _ExactPinned:
    def __init__(self, kp):
        self.lu = spla.splu(sp.csc_matrix(kp[1:, 1:]))
        self.n = kp.shape[0]

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        vec = r.ndim == 1
        b = r.reshape(self.n, -1)
        x = np.zeros_like(b)
        x[1:] = self.lu.solve(np.ascontiguousarray(b[1:]))
        x -= x.mean(axis=0)
        return x[:, 0] if vec else x


class LevelTools:
    """Mass solvers, multigrid transfers and the pinned pressure solver of one level."""

    def __init__(self, level, config: SolverConfig):
        self.disc = get_discretization(level)
        self.config = config
        d = self.disc
        self.n_s = d.layout.n_s
        self.prol_v = [get_discretization(k).prolongation_q2()
                       for k in range(level, 1, -1)]
        self.prol_p = [get_discretization(k).prolongation_q1()
                       for k in range(level, 1, -1)]
        if config.exact_blocks:
            self.vmass = _Exact(d.mass)
            self.pmass = _Exact(d.pressure_mass)
            self.kp_solve = _ExactPinned(d.pressure_stiffness)
        else:
            self.vmass = MassSolver(d.mass, estimate_mass_bounds(
                d.mass, config.cheb_steps, element=d.mass_element))
            self.pmass = MassSolver(d.pressure_mass, estimate_mass_bounds(
                d.pressure_mass, config.cheb_steps, element=d.pressure_mass_element))
            self.kp_solve = PinnedPressureSolver(
                d.pressure_stiffness, self.prol_p, config.mg_cycles_pressure,
                config.mg_smoothing, config.mg_smoothing)

    def block_solver(self, a):
        """Approximate inverse of a scalar velocity-space block (columns)."""
        if self.config.exact_blocks:
            return _Exact(a)
        s = self.config.mg_smoothing
        return _Multigrid(build_hierarchy(a, self.prol_v, self.config.mg_cycles_velocity,
                                          s, s))

    def mass_inverse(self, v):
        """Chebyshev (or exact) M^-1 on stacked velocity vectors of any leading shape."""
        v = np.asarray(v, dtype=float)
        return from_cols(self.vmass(to_cols(v, self.n_s)), v.shape)


@lru_cache(maxsize=16)
def get_tools(level, config: SolverConfig):
    return LevelTools(level, config)


def slot_apply(a, x):
    """Apply a scalar velocity-space matrix to every component of stacked vectors."""
    x = np.asarray(x, dtype=float)
    n = a.shape[1]
    cols = x.reshape(-1, n).T
    return np.ascontiguousarray((a @ cols).T).reshape(x.shape[:-1] + (-1,))


def blocks_apply(mats, x):
    """Apply one scalar matrix per slot to stacked velocity vectors ``x[n]``."""
    return np.stack([(a @ xi.reshape(2, -1).T).T.reshape(-1) for a, xi in zip(mats, x)])


def velocity_cols(x):
    return x.reshape(2, -1).T


def velocity_flat(x):
    return np.ascontiguousarray(x.T).reshape(-1)


def desired_vector(disc, field, t=0.0):
    """Interior mass matrix times the interior nodal interpolant of a target field."""
    v = disc.layout.restrict(disc.interpolate(field, t))
    return velocity_flat(disc.mass @ velocity_cols(v))
