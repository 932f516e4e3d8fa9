"""Optimal control of stationary (Navier-)Stokes flow: Oseen KKT system and preconditioner."""

from dataclasses import dataclass, replace

import numpy as np
import scipy.sparse as sp

from .config import SolverConfig
from .fem import vmul
from .krylov import gmres_fixed
from .oseen import oseen_loop
from .problems import ProblemSpec
from .report import RunReport
from .tools import LevelTools, desired_vector, get_tools

__all__ = [
    "StationaryState", "StationaryKkt", "assemble_stationary_kkt", "apply_prec_phi_s",
    "apply_schur_s", "stokes_initial_guess", "solve_stationary", "zero_state",
]


@dataclass
class StationaryState:
    v: np.ndarray        # interior velocity, length n_v
    zeta: np.ndarray     # interior adjoint velocity
    mu: np.ndarray
    p: np.ndarray
    lift: np.ndarray     # full-space vector holding the Dirichlet data
    k: int = 0

    def full_velocity(self, layout):
        return layout.extend(self.v, self.lift)

    def full_adjoint(self, layout):
        return layout.extend(self.zeta)


def zero_state(tools: LevelTools, problem: ProblemSpec):
    d = tools.disc
    lay = d.layout
    return StationaryState(np.zeros(lay.n_v), np.zeros(lay.n_v), np.zeros(lay.n_p),
                           np.zeros(lay.n_p), d.boundary_lift(problem.g))


class StationaryKkt:
    """Oseen step ``A dx = (R2, R1, r1, r2)`` with unknowns ``(dv, dzeta, dmu, dp)``."""

    def __init__(self, tools: LevelTools, problem: ProblemSpec, config: SolverConfig,
                 state: StationaryState, stokes: bool):
        d = tools.disc
        lay = d.layout
        self.tools, self.config, self.state = tools, config, state
        self.beta = problem.beta
        self.stokes = stokes
        self.n_v, self.n_p = lay.n_v, lay.n_p
        v_full = state.full_velocity(lay)
        zeta_full = state.full_adjoint(lay)
        if stokes:
            nu = 1.0
            self.L = d.stiffness
            self.L_adj = d.stiffness
            l_rows = d.stiffness_rows
            self.L_p = d.pressure_stiffness
            self.L_adj_p = d.pressure_stiffness
            omega = np.zeros(lay.n_v)
        else:
            nu = problem.nu
            ops = d.wind_operators(v_full, nu, config.lps)
            self.L = (nu * d.stiffness + ops.conv + ops.lps).tocsr()
            self.L_adj = (nu * d.stiffness - ops.conv + ops.lps).tocsr()
            l_rows = (nu * d.stiffness_rows + ops.conv_rows + ops.lps_rows).tocsr()
            kp = nu * d.pressure_stiffness
            self.L_p = (kp + ops.conv_p + ops.lps_p).tocsr()
            self.L_adj_p = (kp - ops.conv_p + ops.lps_p).tocsr()
            omega = d.adjoint_convection_term(v_full, zeta_full)
        self.nu = nu
        self.M = d.mass
        self.B = d.div
        self.Bt = d.div_t
        self.M_p = d.pressure_mass
        b = self.beta
        f = d.load(problem.f)
        mvd = desired_vector(d, problem.v_d)
        self.R1 = (f - vmul(l_rows, v_full) - self.Bt @ state.p
                   + vmul(self.M, state.zeta) / b)
        self.R2 = (mvd - vmul(d.mass_rows, v_full) - vmul(self.L_adj, state.zeta)
                   - self.Bt @ state.mu - omega)
        self.r1 = -(d.div_full @ v_full)
        self.r2 = -(self.B @ state.zeta)
        self._phi_solvers = None

    # -- sizes and vectors -------------------------------------------------
    @property
    def dim(self):
        return 2 * self.n_v + 2 * self.n_p

    def system_rhs(self):
        return np.concatenate([self.R2, self.R1, self.r1, self.r2])

    def residual_norm(self):
        return float(np.linalg.norm(self.system_rhs()))

    def split(self, x):
        nv, n_p = self.n_v, self.n_p
        return x[:nv], x[nv:2 * nv], x[2 * nv:2 * nv + n_p], x[2 * nv + n_p:]

    def update(self, state, dx):
        dv, dz, dmu, dp = self.split(dx)
        return replace(state, v=state.v + dv, zeta=state.zeta + dz, mu=state.mu + dmu,
                       p=state.p + dp, k=state.k + 1)

    # -- operator ----------------------------------------------------------
    def phi_matvec(self, x):
        nv = self.n_v
        v, z = x[:nv], x[nv:]
        return np.concatenate([vmul(self.M, v) + vmul(self.L_adj, z),
                               vmul(self.L, v) - vmul(self.M, z) / self.beta])

    def matvec(self, x):
        v, z, mu, p = self.split(x)
        top = self.phi_matvec(x[:2 * self.n_v])
        top[:self.n_v] += self.Bt @ mu
        top[self.n_v:] += self.Bt @ p
        return np.concatenate([top, self.B @ v, self.B @ z])

    def to_sparse(self):
        vec = self.tools.disc.vector
        m, b = vec(self.M), self.B
        zp = None
        return sp.bmat([[m, vec(self.L_adj), self.Bt, zp],
                        [vec(self.L), -m / self.beta, zp, self.Bt],
                        [b, zp, None, None],
                        [zp, b, None, None]], format="csr")

    # -- preconditioner ----------------------------------------------------
    def phi_solvers(self):
        if self._phi_solvers is None:
            shift = self.M / np.sqrt(self.beta)
            self._phi_solvers = (self.tools.block_solver((self.L + shift).tocsr()),
                                 self.tools.block_solver((self.L_adj + shift).tocsr()))
        return self._phi_solvers

    def precondition(self, r):
        nv2 = 2 * self.n_v
        ra, rb = r[:nv2], r[nv2:]
        xa = gmres_fixed(self.phi_matvec, lambda y: apply_prec_phi_s(self, y), ra,
                         self.config.inner_steps)
        b = self.B
        nv = self.n_v
        y = np.concatenate([b @ xa[:nv], b @ xa[nv:]]) - rb
        return np.concatenate([xa, apply_schur_s(self, y)])


def _cols(x, n_s):
    return x.reshape(2, n_s).T


def _uncols(x):
    return np.ascontiguousarray(x.T).reshape(-1)


def schur_phi_inverse(kkt: StationaryKkt, w):
    """(L_adj + M/sqrt(beta))^-1 M (L + M/sqrt(beta))^-1 w."""
    n_s = kkt.n_v // 2
    solve_l, solve_ladj = kkt.phi_solvers()
    u = solve_l(_cols(w, n_s))
    return _uncols(solve_ladj(kkt.M @ u))


def apply_prec_phi_s(kkt: StationaryKkt, y):
    """Block forward substitution with ``[M_c 0; L -S_hat]``."""
    nv = kkt.n_v
    y1, y2 = y[:nv], y[nv:]
    z1 = kkt.tools.mass_inverse(y1)
    z2 = schur_phi_inverse(kkt, vmul(kkt.L, z1) - y2)
    return np.concatenate([z1, z2])


def apply_schur_s(kkt: StationaryKkt, y):
    """M_p^-1 [M_p L_adj,p; L_p -M_p/beta] K_p^-1 on ``y = (y1, y2)``; returns (dmu, dp)."""
    n_p = kkt.n_p
    t = kkt.tools
    a = t.kp_solve(np.stack([y[:n_p], y[n_p:]], axis=1))
    b1 = kkt.M_p @ a[:, 0] + kkt.L_adj_p @ a[:, 1]
    b2 = kkt.L_p @ a[:, 0] - kkt.M_p @ a[:, 1] / kkt.beta
    out = t.pmass(np.stack([b1, b2], axis=1))
    return np.concatenate([out[:, 0], out[:, 1]])


def assemble_stationary_kkt(state, problem: ProblemSpec, config: SolverConfig,
                            level, stokes=None):
    tools = get_tools(level, config)
    stokes = problem.stokes if stokes is None else stokes
    return StationaryKkt(tools, problem, config, state, stokes)


def _report(problem, level, kkt_dim):
    return RunReport(problem.kind, "none", level, problem.nu, problem.beta, kkt_dim)


def stokes_initial_guess(problem: ProblemSpec, config: SolverConfig, level):
    """Solve the Stokes-control KKT system (nu = 1, no convection)."""
    sproblem = replace(problem, stokes=True)
    state, _ = solve_stationary(sproblem, config, level)
    return state


def solve_stationary(problem: ProblemSpec, config: SolverConfig, level):
    tools = get_tools(level, config)
    state = zero_state(tools, problem)
    lay = tools.disc.layout
    report = _report(problem, level, 2 * (lay.n_v + lay.n_p))

    def assemble(s, stokes):
        return StationaryKkt(tools, problem, config, s, stokes or problem.stokes)

    state = oseen_loop(problem, config, state, assemble, report)
    v_full = state.full_velocity(lay)
    vn = np.linalg.norm(v_full)
    report.divergence = [float(np.linalg.norm(tools.disc.div_full @ v_full) / vn)
                         if vn > 0 else 0.0]
    return state, report
