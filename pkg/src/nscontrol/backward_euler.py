"""All-at-once backward Euler KKT system for instationary (Navier-)Stokes control."""

from dataclasses import dataclass, replace

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .config import SolverConfig
from .krylov import gmres_fixed
from .oseen import oseen_loop
from .problems import ProblemSpec
from .report import RunReport
from .tools import LevelTools, desired_vector, get_tools, slot_apply

__all__ = [
    "TimeGridBE", "BeState", "BeKkt", "assemble_be_kkt", "solenoidal_project",
    "solenoidal_projection_rows", "apply_prec_phi_be", "apply_schur_be", "solve_be",
]


@dataclass(frozen=True)
class TimeGridBE:
    tf: float
    n_t: int

    def __post_init__(self):
        if self.n_t < 1:
            raise ValueError("n_t must be at least 1")
        if not self.tf > 0:
            raise ValueError("t_f must be positive")

    @property
    def tau(self):
        return self.tf / self.n_t

    @property
    def times(self):
        return self.tau * np.arange(self.n_t + 1)


@dataclass
class BeState:
    """Trajectories on the node times t_0..t_{n_t}; velocities are interior values."""
    v: np.ndarray       # (n_t + 1, n_v)
    zeta: np.ndarray
    mu: np.ndarray      # (n_t + 1, n_p); slot n_t is the projection multiplier
    p: np.ndarray       # slot 0 is the projection multiplier
    lift: np.ndarray    # (n_t + 1, 2 n_q2) boundary data per time
    k: int = 0

    def full_velocity(self, layout):
        return np.stack([layout.extend(v, g) for v, g in zip(self.v, self.lift)])

    def full_adjoint(self, layout):
        return np.stack([layout.extend(z) for z in self.zeta])


def initial_state(tools: LevelTools, problem: ProblemSpec, grid: TimeGridBE):
    d = tools.disc
    lay = d.layout
    s = grid.n_t + 1
    lift = np.stack([d.boundary_lift(problem.g, t) for t in grid.times])
    v = np.zeros((s, lay.n_v))
    v[0] = lay.restrict(d.interpolate(problem.v0, 0.0))
    return BeState(v, np.zeros((s, lay.n_v)), np.zeros((s, lay.n_p)),
                   np.zeros((s, lay.n_p)), lift)


def _desired(d, problem, t):
    return desired_vector(d, problem.v_d, t)


class BeKkt:
    """Oseen step of the backward Euler optimality system, unknowns (dv, dzeta, dmu, dp)."""

    def __init__(self, tools: LevelTools, problem: ProblemSpec, grid: TimeGridBE,
                 config: SolverConfig, state: BeState, stokes: bool):
        d = tools.disc
        lay = d.layout
        self.tools, self.config, self.state, self.grid = tools, config, state, grid
        self.beta = problem.beta
        self.stokes = stokes
        self.n_v, self.n_p = lay.n_v, lay.n_p
        self.slots = grid.n_t + 1
        tau = self.tau = grid.tau
        nt = grid.n_t
        self.M = d.mass
        self.B = d.div
        self.Bt = d.div_t
        self.M_p = d.pressure_mass
        v_full = state.full_velocity(lay)
        z_full = state.full_adjoint(lay)
        times = grid.times
        if stokes:
            l0 = (tau * d.stiffness + d.mass).tocsr()
            lr = (tau * d.stiffness_rows + d.mass_rows).tocsr()
            lp = (tau * d.pressure_stiffness + d.pressure_mass).tocsr()
            self.L = [l0] * self.slots
            self.T = [l0] * self.slots
            l_rows = [lr] * self.slots
            self.L_p = [lp] * self.slots
            self.T_p = [lp] * self.slots
            omega = np.zeros((self.slots, self.n_v))
        else:
            nu = problem.nu
            self.L, self.T, l_rows, self.L_p, self.T_p = [], [], [], [], []
            omega = np.zeros((self.slots, self.n_v))
            for n in range(self.slots):
                ops = d.wind_operators(v_full[n], nu, config.lps)
                a = nu * d.stiffness + ops.lps
                self.L.append((tau * (a + ops.conv) + d.mass).tocsr())
                self.T.append((tau * (a - ops.conv) + d.mass).tocsr())
                l_rows.append((tau * (nu * d.stiffness_rows + ops.conv_rows + ops.lps_rows)
                               + d.mass_rows).tocsr())
                ap = nu * d.pressure_stiffness + ops.lps_p
                self.L_p.append((tau * (ap + ops.conv_p) + d.pressure_mass).tocsr())
                self.T_p.append((tau * (ap - ops.conv_p) + d.pressure_mass).tocsr())
                if n < nt:
                    omega[n] = d.adjoint_convection_term(v_full[n], z_full[n])

        mv_rows = slot_apply(d.mass_rows, v_full)
        mz = slot_apply(self.M, state.zeta)
        b = self.beta
        R1 = np.zeros((nt, self.n_v))
        R2 = np.zeros((nt, self.n_v))
        for n in range(nt):
            lv = l_rows[n + 1] @ v_full[n + 1].reshape(2, -1).T
            R1[n] = (tau * d.load(problem.f, times[n + 1]) + mv_rows[n]
                     - lv.T.reshape(-1) - tau * (self.Bt @ state.p[n + 1])
                     + (tau / b) * mz[n + 1])
            tz = self.T[n] @ state.zeta[n].reshape(2, -1).T
            R2[n] = (tau * _desired(d, problem, times[n]) - tau * mv_rows[n]
                     - tz.T.reshape(-1) + mz[n + 1] - tau * (self.Bt @ state.mu[n])
                     - tau * omega[n])
        self.b1 = np.zeros((self.slots, self.n_v))
        self.b2 = np.zeros((self.slots, self.n_v))
        self.b3 = np.zeros((self.slots, self.n_p))
        self.b4 = np.zeros((self.slots, self.n_p))
        self.b1[:nt] = R2
        self.b2[1:] = R1
        self.b3[1:] = -tau * (v_full[1:] @ d.div_full.T)
        self.b4[:nt] = -tau * (state.zeta[:nt] @ self.Bt)
        self._solvers = None

    # -- vectors -----------------------------------------------------------
    @property
    def dim(self):
        return 2 * self.slots * (self.n_v + self.n_p)

    def system_rhs(self):
        return np.concatenate([self.b1.ravel(), self.b2.ravel(), self.b3.ravel(),
                               self.b4.ravel()])

    def residual_norm(self):
        return float(np.linalg.norm(self.system_rhs()))

    def split(self, x):
        s, nv, n_p = self.slots, self.n_v, self.n_p
        a = s * nv
        return (x[:a].reshape(s, nv), x[a:2 * a].reshape(s, nv),
                x[2 * a:2 * a + s * n_p].reshape(s, n_p), x[2 * a + s * n_p:].reshape(s, n_p))

    def update(self, state, dx):
        dv, dz, dmu, dp = self.split(dx)
        # the closure rows encode dv_0 = 0 and dzeta_{n_t} = 0 exactly
        dv = dv.copy()
        dz = dz.copy()
        dv[0] = 0.0
        dz[-1] = 0.0
        return replace(state, v=state.v + dv, zeta=state.zeta + dz, mu=state.mu + dmu,
                       p=state.p + dp, k=state.k + 1)

    # -- operator ----------------------------------------------------------
    @staticmethod
    def _blocks_apply(mats, x):
        return np.stack([(a @ xi.reshape(2, -1).T).T.reshape(-1) for a, xi in zip(mats, x)])

    def l1_apply(self, z):
        """Upper bidiagonal chain: T_n z_n - M z_{n+1}."""
        out = self._blocks_apply(self.T, z)
        out[:-1] -= slot_apply(self.M, z[1:])
        return out

    def l2_apply(self, v):
        """Lower bidiagonal chain: L_n v_n - M v_{n-1}."""
        out = self._blocks_apply(self.L, v)
        out[1:] -= slot_apply(self.M, v[:-1])
        return out

    def phi_matvec(self, x):
        s, nv = self.slots, self.n_v
        v = x[:s * nv].reshape(s, nv)
        z = x[s * nv:].reshape(s, nv)
        tau = self.tau
        mv = slot_apply(self.M, v)
        mz = slot_apply(self.M, z)
        top = self.l1_apply(z)
        top[:-1] += tau * mv[:-1]
        bot = self.l2_apply(v)
        bot[1:] -= (tau / self.beta) * mz[1:]
        return np.concatenate([top.ravel(), bot.ravel()])

    def psi_apply(self, xa):
        s, nv = self.slots, self.n_v
        v = xa[:s * nv].reshape(s, nv)
        z = xa[s * nv:].reshape(s, nv)
        return np.concatenate([(self.tau * (v @ self.Bt)).ravel(),
                               (self.tau * (z @ self.Bt)).ravel()])

    def matvec(self, x):
        s, nv, n_p = self.slots, self.n_v, self.n_p
        xa = x[:2 * s * nv]
        mu = x[2 * s * nv:2 * s * nv + s * n_p].reshape(s, n_p)
        p = x[2 * s * nv + s * n_p:].reshape(s, n_p)
        top = self.phi_matvec(xa)
        top[:s * nv] += (self.tau * (mu @ self.B)).ravel()
        top[s * nv:] += (self.tau * (p @ self.B)).ravel()
        return np.concatenate([top, self.psi_apply(xa)])

    def to_sparse(self):
        s, tau, b = self.slots, self.tau, self.beta
        vec = self.tools.disc.vector
        m = vec(self.M)
        e1 = sp.diags([1.0] * (s - 1) + [0.0])
        e2 = sp.diags([0.0] + [1.0] * (s - 1))
        up = sp.eye(s, k=1)
        mbe = sp.kron(e1, tau * m)
        mbeta = sp.kron(e2, (tau / b) * m)
        l1 = sp.block_diag([vec(t) for t in self.T]) - sp.kron(up, m)
        l2 = sp.block_diag([vec(t) for t in self.L]) - sp.kron(up.T, m)
        bb = sp.kron(sp.eye(s), tau * self.B)
        return sp.bmat([[mbe, l1, bb.T, None], [l2, -mbeta, None, bb.T],
                        [bb, None, None, None], [None, bb, None, None]], format="csr")

    # -- preconditioner ----------------------------------------------------
    def shifts(self):
        c = np.full(self.slots, self.tau / np.sqrt(self.beta))
        c[0] = 0.0
        c[-1] *= np.sqrt(self.config.epsilon)
        return c

    def block_solvers(self):
        """Approximate inverses of L_n + c_n M and T_n + c_n M per slot."""
        if self._solvers is None:
            cache = {}

            def solver(a, c):
                key = (id(a), c)
                if key not in cache:
                    cache[key] = self.tools.block_solver((a + c * self.M).tocsr())
                return cache[key]

            c = self.shifts()
            self._solvers = ([solver(a, ci) for a, ci in zip(self.L, c)],
                             [solver(a, ci) for a, ci in zip(self.T, c)])
        return self._solvers

    def mass_tilde_scale(self):
        w = np.full(self.slots, self.tau)
        w[-1] *= self.config.epsilon
        return w

    def precondition(self, r):
        na = 2 * self.slots * self.n_v
        ra, rb = r[:na], r[na:]
        xa = gmres_fixed(self.phi_matvec, lambda y: apply_prec_phi_be(self, y), ra,
                         self.config.inner_steps)
        y = self.psi_apply(xa) - rb
        return np.concatenate([xa, apply_schur_be(self, y)])


def _cols(x):
    return x.reshape(2, -1).T


def _uncols(x):
    return np.ascontiguousarray(x.T).reshape(-1)


def schur_phi_inverse_be(kkt: BeKkt, w):
    """(L1 + M_sb)^-1 M_tilde (L2 + M_sb)^-1 by block substitution."""
    lsolve, tsolve = kkt.block_solvers()
    m = kkt.M
    s = kkt.slots
    u = np.zeros_like(w)
    for n in range(s):
        rhs = _cols(w[n])
        if n > 0:
            rhs = rhs + m @ _cols(u[n - 1])
        u[n] = _uncols(lsolve[n](rhs))
    sm = slot_apply(m, u) * kkt.mass_tilde_scale()[:, None]
    z = np.zeros_like(w)
    for n in range(s - 1, -1, -1):
        rhs = _cols(sm[n])
        if n < s - 1:
            rhs = rhs + m @ _cols(z[n + 1])
        z[n] = _uncols(tsolve[n](rhs))
    return z


def apply_prec_phi_be(kkt: BeKkt, y):
    s, nv = kkt.slots, kkt.n_v
    y1 = y[:s * nv].reshape(s, nv)
    y2 = y[s * nv:].reshape(s, nv)
    z1 = kkt.tools.mass_inverse(y1) / kkt.mass_tilde_scale()[:, None]
    z2 = schur_phi_inverse_be(kkt, kkt.l2_apply(z1) - y2)
    return np.concatenate([z1.ravel(), z2.ravel()])


def apply_schur_be(kkt: BeKkt, y):
    """tau^-2 M_p^-1 D_p K_p^-1 over all pressure slots; returns (dmu, dp)."""
    s, n_p, tau, b = kkt.slots, kkt.n_p, kkt.tau, kkt.beta
    t = kkt.tools
    a = t.kp_solve(y.reshape(2 * s, n_p).T).T      # (2s, n_p)
    a1, a2 = a[:s], a[s:]
    mp = kkt.M_p
    ma1 = a1 @ mp
    ma2 = a2 @ mp
    b1 = np.stack([kkt.T_p[n] @ a2[n] for n in range(s)])
    b1[:-1] += tau * ma1[:-1] - ma2[1:]
    b2 = np.stack([kkt.L_p[n] @ a1[n] for n in range(s)])
    b2[1:] -= ma1[:-1] + (tau / b) * ma2[1:]
    out = t.pmass(np.concatenate([b1, b2]).T).T
    return out.ravel() / tau ** 2


def solenoidal_projection_rows(disc, tau, nu=1.0, wind=None, lps=None):
    """Saddle matrix [L_0 tau B^T; B 0] of the solenoidal projection (pressure pinned)."""
    l0 = tau * nu * disc.stiffness + disc.mass
    if wind is not None:
        ops = disc.wind_operators(wind, nu, lps)
        l0 = l0 + tau * (ops.conv + ops.lps)
    vec = disc.vector(l0)
    b = disc.div[1:]
    return sp.bmat([[vec, tau * b.T], [b, None]], format="csc"), vec


def solenoidal_project(disc, vec, tau, nu=1.0, wind=None, lps=None):
    """Divergence-free representative of an interior velocity vector."""
    a, l0 = solenoidal_projection_rows(disc, tau, nu, wind, lps)
    rhs = np.concatenate([l0 @ vec, np.zeros(disc.layout.n_p - 1)])
    return spla.spsolve(a, rhs)[:vec.size]


def assemble_be_kkt(state, problem: ProblemSpec, grid: TimeGridBE, config: SolverConfig,
                    level, stokes=None):
    tools = get_tools(level, config)
    stokes = problem.stokes if stokes is None else stokes
    return BeKkt(tools, problem, grid, config, state, stokes)


def solve_be(problem: ProblemSpec, config: SolverConfig, level, grid=None):
    tools = get_tools(level, config)
    if grid is None:
        grid = TimeGridBE(problem.tf, problem.n_t)
    state = initial_state(tools, problem, grid)
    lay = tools.disc.layout
    report = RunReport(problem.kind, "be", level, problem.nu, problem.beta,
                       2 * (grid.n_t + 1) * (lay.n_v + lay.n_p))

    def assemble(s, stokes):
        return BeKkt(tools, problem, grid, config, s, stokes or problem.stokes)

    state = oseen_loop(problem, config, state, assemble, report)
    report.divergence = _divergence(tools, state.full_velocity(lay))
    return state, report


def _divergence(tools, v_full):
    out = []
    for v in v_full:
        vn = np.linalg.norm(v)
        out.append(float(np.linalg.norm(tools.disc.div_full @ v) / vn) if vn > 0 else 0.0)
    return out
