"""All-at-once Crank-Nicolson KKT system with staggered pressures and the T-transformation."""

from dataclasses import dataclass, replace

import numpy as np
import scipy.sparse as sp

from .config import SolverConfig
from .krylov import gmres_fixed
from .oseen import oseen_loop
from .problems import ProblemSpec
from .report import RunReport
from .tools import (LevelTools, blocks_apply, desired_vector, get_tools, slot_apply,
                    velocity_cols, velocity_flat)

__all__ = [
    "TimeGridCN", "TTransform", "t_apply", "CnState", "CnKkt", "assemble_cn_kkt",
    "apply_prec_phi_cn", "apply_schur_cn", "solve_cn", "error_linf_l2",
]


@dataclass(frozen=True)
class TimeGridCN:
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

    @property
    def staggered_times(self):
        return self.tau * (np.arange(self.n_t) + 0.5)

    def staggered_index(self, t):
        """Index of the staggered time closest to ``t``."""
        return int(np.argmin(np.abs(self.staggered_times - t)))


class TTransform:
    """Block operators built on I + (upper shift) acting on (n_t, size) arrays.

    ``upper`` is I_{n,4} (x_n + x_{n+1}); its transpose is the lower variant
    (x_n + x_{n-1}).
    """

    def __init__(self, n_t):
        if n_t < 1:
            raise ValueError("n_t must be at least 1")
        self.n_t = n_t

    @staticmethod
    def upper(x):
        y = x.copy()
        y[:-1] += x[1:]
        return y

    @staticmethod
    def lower(x):
        y = x.copy()
        y[1:] += x[:-1]
        return y

    @staticmethod
    def upper_inv(y):
        x = np.empty_like(y)
        x[-1] = y[-1]
        for n in range(len(y) - 2, -1, -1):
            x[n] = y[n] - x[n + 1]
        return x

    @staticmethod
    def lower_inv(y):
        x = np.empty_like(y)
        x[0] = y[0]
        for n in range(1, len(y)):
            x[n] = y[n] - x[n - 1]
        return x

    def matrix(self):
        return sp.eye(self.n_t) + sp.eye(self.n_t, k=1)


# T1 = T4 = I_4 (upper), T2 = T3 = I_4^T (lower)
_KINDS = {"T1": "upper", "T4": "upper", "T2": "lower", "T3": "lower"}


def t_apply(tt: TTransform, which, x, inverse=False):
    """Apply T1..T4 (or an inverse) to an ``(n_t, size)`` block array."""
    kind = _KINDS[which]
    fn = getattr(tt, kind + ("_inv" if inverse else ""))
    x = np.asarray(x, dtype=float)
    if x.shape[0] != tt.n_t:
        raise ValueError(f"expected {tt.n_t} blocks, got {x.shape[0]}")
    return fn(x)


@dataclass
class CnState:
    """v, zeta on node times (v_0 and zeta_{n_t} fixed); mu, p on staggered times."""
    v: np.ndarray       # (n_t + 1, n_v) interior values
    zeta: np.ndarray
    mu: np.ndarray      # (n_t, n_p)
    p: np.ndarray
    lift: np.ndarray    # (n_t + 1, 2 n_q2)
    k: int = 0

    def full_velocity(self, layout):
        return np.stack([layout.extend(v, g) for v, g in zip(self.v, self.lift)])

    def full_adjoint(self, layout):
        return np.stack([layout.extend(z) for z in self.zeta])


def initial_state(tools: LevelTools, problem: ProblemSpec, grid: TimeGridCN):
    d = tools.disc
    lay = d.layout
    s = grid.n_t + 1
    lift = np.stack([d.boundary_lift(problem.g, t) for t in grid.times])
    v = np.zeros((s, lay.n_v))
    v[0] = lay.restrict(d.interpolate(problem.v0, 0.0))
    return CnState(v, np.zeros((s, lay.n_v)), np.zeros((grid.n_t, lay.n_p)),
                   np.zeros((grid.n_t, lay.n_p)), lift)


class CnKkt:
    """Transformed Crank-Nicolson Oseen step; unknowns (dv_1.., dzeta_..n_t-1, dmu, dp)."""

    def __init__(self, tools: LevelTools, problem: ProblemSpec, grid: TimeGridCN,
                 config: SolverConfig, state: CnState, stokes: bool):
        d = tools.disc
        lay = d.layout
        self.tools, self.config, self.state, self.grid = tools, config, state, grid
        self.beta = problem.beta
        self.stokes = stokes
        self.n_v, self.n_p = lay.n_v, lay.n_p
        nt = self.n_t = grid.n_t
        h = 0.5 * grid.tau
        self.tau = grid.tau
        self.tt = TTransform(nt)
        self.M = d.mass
        self.B = d.div
        self.Bt = d.div_t
        self.M_p = d.pressure_mass
        v_full = state.full_velocity(lay)
        z_full = state.full_adjoint(lay)
        times = grid.times
        m, mr, mp = d.mass, d.mass_rows, d.pressure_mass
        s = nt + 1
        omega = np.zeros((s, self.n_v))
        if stokes:
            a, ar, ap = d.stiffness, d.stiffness_rows, d.pressure_stiffness
            adj = [a] * s
            fwd = [a] * s
            fwd_rows = [ar] * s
            fwd_p = [ap] * s
            adj_p = [ap] * s
        else:
            nu = problem.nu
            adj, fwd, fwd_rows, fwd_p, adj_p = [], [], [], [], []
            for n in range(s):
                ops = d.wind_operators(v_full[n], nu, config.lps)
                base = nu * d.stiffness + ops.lps
                fwd.append(base + ops.conv)
                adj.append(base - ops.conv)
                fwd_rows.append(nu * d.stiffness_rows + ops.conv_rows + ops.lps_rows)
                bp = nu * d.pressure_stiffness + ops.lps_p
                fwd_p.append(bp + ops.conv_p)
                adj_p.append(bp - ops.conv_p)
                omega[n] = d.adjoint_convection_term(v_full[n], z_full[n])
        self.Lp = [(h * a + m).tocsr() for a in fwd]
        self.Lm = [(h * a - m).tocsr() for a in fwd]
        self.Tp = [(h * a + m).tocsr() for a in adj]
        self.Tm = [(h * a - m).tocsr() for a in adj]
        self.Lp_p = [(h * a + mp).tocsr() for a in fwd_p]
        self.Lm_p = [(h * a - mp).tocsr() for a in fwd_p]
        self.Tp_p = [(h * a + mp).tocsr() for a in adj_p]
        self.Tm_p = [(h * a - mp).tocsr() for a in adj_p]

        # residuals of the untransformed system, n = 0..n_t-1
        b = self.beta
        f = np.stack([d.load(problem.f, t) for t in times])
        vd = np.stack([desired_vector(d, problem.v_d, t) for t in times])
        lv_p = blocks_apply([(h * a + mr) for a in fwd_rows], v_full)
        lv_m = blocks_apply([(h * a - mr) for a in fwd_rows], v_full)
        mv = slot_apply(mr, v_full)
        mz = slot_apply(m, state.zeta)
        tz_p = blocks_apply(self.Tp, state.zeta)
        tz_m = blocks_apply(self.Tm, state.zeta)
        bp = state.p @ self.B
        bmu = state.mu @ self.B
        self.R1 = (h * (f[:-1] + f[1:]) - lv_m[:-1] - lv_p[1:] - self.tau * bp
                   + (h / b) * (mz[:-1] + mz[1:]))
        self.R2 = (h * (vd[:-1] + vd[1:]) - h * (mv[:-1] + mv[1:]) - tz_p[:-1] - tz_m[1:]
                   - self.tau * bmu - h * (omega[:-1] + omega[1:]))
        self.r1 = -(v_full[1:] @ d.div_full.T)
        self.r2 = -(state.zeta[:-1] @ self.Bt)
        self._solvers = None

    # -- vectors -----------------------------------------------------------
    @property
    def dim(self):
        return 2 * self.n_t * (self.n_v + self.n_p)

    def untransformed_rhs(self):
        return (self.R2, self.R1, self.tau * self.r1, self.tau * self.r2)

    def residual_norm(self):
        return float(np.sqrt(sum(np.sum(x * x) for x in self.untransformed_rhs())))

    def transform(self, blocks):
        b1, b2, b3, b4 = blocks
        tt = self.tt
        return (tt.upper(b1), tt.lower(b2), tt.lower(b3), tt.upper(b4))

    def system_rhs(self):
        return np.concatenate([x.ravel() for x in self.transform(self.untransformed_rhs())])

    def split(self, x):
        nt, nv, n_p = self.n_t, self.n_v, self.n_p
        a = nt * nv
        return (x[:a].reshape(nt, nv), x[a:2 * a].reshape(nt, nv),
                x[2 * a:2 * a + nt * n_p].reshape(nt, n_p),
                x[2 * a + nt * n_p:].reshape(nt, n_p))

    def update(self, state, dx):
        dv, dz, dmu, dp = self.split(dx)
        v = state.v.copy()
        z = state.zeta.copy()
        v[1:] += dv
        z[:-1] += dz
        return replace(state, v=v, zeta=z, mu=state.mu + dmu, p=state.p + dp, k=state.k + 1)

    # -- operator ----------------------------------------------------------
    def l1_tilde(self, z):
        """Upper bidiagonal: T+_n z_n + T-_{n+1} z_{n+1}."""
        out = blocks_apply(self.Tp[:-1], z)
        out[:-1] += blocks_apply(self.Tm[1:-1], z[1:])
        return out

    def l2_tilde(self, v):
        """Lower bidiagonal: L+_{n+1} v_n + L-_n v_{n-1}."""
        out = blocks_apply(self.Lp[1:], v)
        out[1:] += blocks_apply(self.Lm[1:-1], v[:-1])
        return out

    def phi_tilde(self, v, z):
        h = 0.5 * self.tau
        tt = self.tt
        mv = slot_apply(self.M, v)
        mz = slot_apply(self.M, z)
        top = h * tt.lower(mv) + self.l1_tilde(z)
        bot = self.l2_tilde(v) - (h / self.beta) * tt.upper(mz)
        return top, bot

    def phi_matvec(self, x):
        nt, nv = self.n_t, self.n_v
        v = x[:nt * nv].reshape(nt, nv)
        z = x[nt * nv:].reshape(nt, nv)
        top, bot = self.phi_tilde(v, z)
        return np.concatenate([self.tt.upper(top).ravel(), self.tt.lower(bot).ravel()])

    def psi_apply(self, xa):
        nt, nv = self.n_t, self.n_v
        v = xa[:nt * nv].reshape(nt, nv)
        z = xa[nt * nv:].reshape(nt, nv)
        return np.concatenate([self.tt.lower(self.tau * (v @ self.Bt)).ravel(),
                               self.tt.upper(self.tau * (z @ self.Bt)).ravel()])

    def matvec(self, x):
        v, z, mu, p = self.split(x)
        top, bot = self.phi_tilde(v, z)
        top += self.tau * (mu @ self.B)
        bot += self.tau * (p @ self.B)
        rows = self.transform((top, bot, self.tau * (v @ self.Bt), self.tau * (z @ self.Bt)))
        return np.concatenate([r.ravel() for r in rows])

    def to_sparse(self):
        nt, tau, h = self.n_t, self.tau, 0.5 * self.tau
        vec = self.tools.disc.vector
        m = vec(self.M)
        i4 = self.tt.matrix()
        eye = sp.eye(nt)
        l1 = sp.block_diag([vec(a) for a in self.Tp[:-1]])
        l1 = l1 + _offdiag([vec(a) for a in self.Tm[1:-1]], nt, upper=True, like=m)
        l2 = sp.block_diag([vec(a) for a in self.Lp[1:]])
        l2 = l2 + _offdiag([vec(a) for a in self.Lm[1:-1]], nt, upper=False, like=m)
        t1 = sp.kron(i4, sp.eye(m.shape[0]))
        t2 = t1.T
        bt = sp.kron(eye, tau * self.B)
        a_tilde = sp.bmat([[sp.kron(i4.T, h * m), l1, bt.T, None],
                           [l2, -sp.kron(i4, (h / self.beta) * m), None, bt.T],
                           [bt, None, None, None], [None, bt, None, None]])
        tp = sp.kron(i4, sp.eye(self.n_p))
        t = sp.block_diag([t1, t2, tp.T, tp])
        return (t @ a_tilde).tocsr()

    # -- preconditioner ----------------------------------------------------
    def shift(self):
        return self.tau / (2.0 * np.sqrt(self.beta))

    def block_solvers(self):
        if self._solvers is None:
            c = self.shift()
            cache = {}

            def solver(a):
                if id(a) not in cache:
                    cache[id(a)] = self.tools.block_solver((a + c * self.M).tocsr())
                return cache[id(a)]

            self._solvers = ([solver(a) for a in self.Lp[1:]],
                             [solver(a) for a in self.Tp[:-1]])
        return self._solvers

    def precondition(self, r):
        na = 2 * self.n_t * self.n_v
        ra, rb = r[:na], r[na:]
        xa = gmres_fixed(self.phi_matvec, lambda y: apply_prec_phi_cn(self, y), ra,
                         self.config.inner_steps)
        y = self.psi_apply(xa) - rb
        return np.concatenate([xa, apply_schur_cn(self, y)])


def _offdiag(blocks, nt, upper, like):
    rows = [[None] * nt for _ in range(nt)]
    for i in range(nt):
        rows[i][i] = sp.csr_matrix(like.shape)
    for k, b in enumerate(blocks):
        if upper:
            rows[k][k + 1] = b
        else:
            rows[k + 1][k] = b
    return sp.bmat(rows)


def schur_phi_inverse_cn(kkt: CnKkt, w):
    """(L1~ + Mh^T)^-1 M_D T2 (L2~ + Mh)^-1 T2^-1 w with block substitutions."""
    lsolve, tsolve = kkt.block_solvers()
    c = kkt.shift()
    m = kkt.M
    nt = kkt.n_t
    w = kkt.tt.lower_inv(w)
    u = np.zeros_like(w)
    for n in range(nt):
        rhs = velocity_cols(w[n])
        if n > 0:
            prev = velocity_cols(u[n - 1])
            rhs = rhs - (kkt.Lm[n] @ prev + c * (m @ prev))
        u[n] = velocity_flat(lsolve[n](rhs))
    s = 0.5 * kkt.tau * slot_apply(m, kkt.tt.lower(u))
    z = np.zeros_like(w)
    for n in range(nt - 1, -1, -1):
        rhs = velocity_cols(s[n])
        if n < nt - 1:
            nxt = velocity_cols(z[n + 1])
            rhs = rhs - (kkt.Tm[n + 1] @ nxt + c * (m @ nxt))
        z[n] = velocity_flat(tsolve[n](rhs))
    return z


def apply_prec_phi_cn(kkt: CnKkt, y):
    nt, nv = kkt.n_t, kkt.n_v
    tt = kkt.tt
    y1 = y[:nt * nv].reshape(nt, nv)
    y2 = y[nt * nv:].reshape(nt, nv)
    z1 = tt.lower_inv(kkt.tools.mass_inverse(tt.upper_inv(y1)) / (0.5 * kkt.tau))
    w = tt.lower(kkt.l2_tilde(z1)) - y2
    z2 = schur_phi_inverse_cn(kkt, w)
    return np.concatenate([z1.ravel(), z2.ravel()])


def apply_schur_cn(kkt: CnKkt, y):
    """tau^-2 M_p^-1 D_p K_p^-1 blkdiag(T3^-1, T4^-1); returns (dmu, dp)."""
    nt, n_p, tau, b = kkt.n_t, kkt.n_p, kkt.tau, kkt.beta
    h = 0.5 * tau
    tt = kkt.tt
    y = y.reshape(2 * nt, n_p)
    y = np.concatenate([tt.lower_inv(y[:nt]), tt.upper_inv(y[nt:])])
    t = kkt.tools
    a = t.kp_solve(y.T).T
    a1, a2 = a[:nt], a[nt:]
    mp = kkt.M_p
    b1 = h * tt.lower(a1 @ mp) + np.stack([kkt.Tp_p[n] @ a2[n] for n in range(nt)])
    b1[:-1] += np.stack([kkt.Tm_p[n + 1] @ a2[n + 1] for n in range(nt - 1)]) \
        if nt > 1 else 0.0
    b2 = np.stack([kkt.Lp_p[n + 1] @ a1[n] for n in range(nt)]) \
        - (h / b) * tt.upper(a2 @ mp)
    if nt > 1:
        b2[1:] += np.stack([kkt.Lm_p[n] @ a1[n - 1] for n in range(1, nt)])
    out = t.pmass(np.concatenate([b1, b2]).T).T
    return out.ravel() / tau ** 2


def assemble_cn_kkt(state, problem: ProblemSpec, grid: TimeGridCN, config: SolverConfig,
                    level, stokes=None):
    tools = get_tools(level, config)
    stokes = problem.stokes if stokes is None else stokes
    return CnKkt(tools, problem, grid, config, state, stokes)


def error_linf_l2(disc, trajectory_full, exact, times):
    """max_n sqrt(e_n^T M e_n) with e_n the nodal error at time t_n (full vectors)."""
    worst = 0.0
    for x, t in zip(trajectory_full, times):
        e = velocity_cols(np.asarray(x) - disc.interpolate(exact, t))
        worst = max(worst, float(np.sqrt(np.sum(e * (disc.mass_full @ e)))))
    return worst


def solve_cn(problem: ProblemSpec, config: SolverConfig, level, grid=None):
    tools = get_tools(level, config)
    if grid is None:
        grid = TimeGridCN(problem.tf, problem.n_t)
    state = initial_state(tools, problem, grid)
    lay = tools.disc.layout
    report = RunReport(problem.kind, "cn", level, problem.nu, problem.beta,
                       2 * grid.n_t * (lay.n_v + lay.n_p))

    def assemble(s, stokes):
        return CnKkt(tools, problem, grid, config, s, stokes or problem.stokes)

    state = oseen_loop(problem, config, state, assemble, report)
    v_full = state.full_velocity(lay)
    d = tools.disc
    if problem.exact_v is not None:
        report.v_err = error_linf_l2(d, v_full, problem.exact_v, grid.times)
    if problem.exact_zeta is not None:
        report.zeta_err = error_linf_l2(d, state.full_adjoint(lay), problem.exact_zeta,
                                        grid.times)
    report.divergence = []
    for v in v_full[1:]:
        vn = np.linalg.norm(v)
        report.divergence.append(float(np.linalg.norm(d.div_full @ v) / vn) if vn else 0.0)
    return state, report
