"""Q2-Q1 Taylor-Hood finite elements on a uniform grid of (-1, 1)^2.

Velocity vectors are blocked by component, ``[x-part; y-part]``, and nodes are
numbered lexicographically with x1 running fastest.  A *full* velocity vector
has ``2 * n_q2`` entries (every Q2 node); an *interior* one has ``n_v`` entries
(Dirichlet nodes eliminated).  Every velocity-space bilinear form used here acts
componentwise, so matrices are kept in scalar form and applied to both
components at once (see :func:`vmul`).
"""

from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Optional

import numpy as np
import scipy.io
import scipy.sparse as sp

__all__ = [
    "Grid", "DofLayout", "LpsConfig", "WindOperators", "Discretization",
    "build_grid", "build_layout", "vmul", "q2_basis_1d", "q1_basis_1d",
    "gauss_rule", "write_matrix_market",
]

# maps (x1, x2, t) -> (u1, u2), or -> scalar array for pressure-space fields
FieldFunction = Callable[[np.ndarray, np.ndarray, float], object]

MAX_LEVEL = 8


def gauss_rule(n=4):
    return np.polynomial.legendre.leggauss(n)


def q2_basis_1d(xi):
    """Values and derivatives of the 1D quadratic Lagrange basis (nodes -1, 0, 1)."""
    xi = np.asarray(xi, dtype=float)
    val = np.stack([0.5 * xi * (xi - 1.0), 1.0 - xi ** 2, 0.5 * xi * (xi + 1.0)])
    der = np.stack([xi - 0.5, -2.0 * xi, xi + 0.5])
    return val, der


def q1_basis_1d(xi):
    xi = np.asarray(xi, dtype=float)
    val = np.stack([0.5 * (1.0 - xi), 0.5 * (1.0 + xi)])
    der = np.stack([-0.5 * np.ones_like(xi), 0.5 * np.ones_like(xi)])
    return val, der


def _tensor_tables(basis_1d, xi):
    """Basis tables at the tensor points (xi[qy], xi[qx]), q = qy * nq + qx.

    Local node k = b * p + a, where a indexes x1 and b indexes x2.
    """
    val, der = basis_1d(xi)
    p, nq = val.shape
    phi = np.einsum("bj,ai->jiba", val, val).reshape(nq * nq, p * p)
    dxi = np.einsum("bj,ai->jiba", val, der).reshape(nq * nq, p * p)
    deta = np.einsum("bj,ai->jiba", der, val).reshape(nq * nq, p * p)
    return phi, dxi, deta


@dataclass(frozen=True)
class Grid:
    level: int
    elements_per_side: int
    element_size: float
    q2_nodes: np.ndarray      # (n_q2, 2)
    q1_nodes: np.ndarray      # (n_q1, 2)
    q2_conn: np.ndarray       # (n_el, 9)
    q1_conn: np.ndarray       # (n_el, 4)
    element_origin: np.ndarray  # (n_el, 2) lower-left corner
    patch_elements: np.ndarray  # (n_patch, 4), ordered (0,0), (1,0), (0,1), (1,1)
    patch_q2: np.ndarray      # (n_patch, 25)
    patch_q1: np.ndarray      # (n_patch, 9)

    @property
    def n_elements(self):
        return self.q2_conn.shape[0]

    @property
    def n_q2(self):
        return self.q2_nodes.shape[0]

    @property
    def n_q1(self):
        return self.q1_nodes.shape[0]


def build_grid(level: int) -> Grid:
    if not isinstance(level, (int, np.integer)) or not 1 <= level <= MAX_LEVEL:
        raise ValueError(f"level must be an integer in [1, {MAX_LEVEL}], got {level!r}")
    level = int(level)
    m = 2 ** level
    h = 2.0 / m
    n2, n1 = 2 * m + 1, m + 1

    c2 = np.linspace(-1.0, 1.0, n2)
    c1 = np.linspace(-1.0, 1.0, n1)
    q2_nodes = np.stack(np.meshgrid(c2, c2, indexing="xy"), axis=-1).reshape(-1, 2)
    q1_nodes = np.stack(np.meshgrid(c1, c1, indexing="xy"), axis=-1).reshape(-1, 2)

    ej, ei = np.divmod(np.arange(m * m), m)
    a3 = np.tile(np.arange(3), 3)
    b3 = np.repeat(np.arange(3), 3)
    q2_conn = (2 * ej[:, None] + b3) * n2 + 2 * ei[:, None] + a3
    a2 = np.tile(np.arange(2), 2)
    b2 = np.repeat(np.arange(2), 2)
    q1_conn = (ej[:, None] + b2) * n1 + ei[:, None] + a2
    origin = np.stack([-1.0 + h * ei, -1.0 + h * ej], axis=1)

    mp = m // 2
    pj, pi = np.divmod(np.arange(mp * mp), mp)
    offsets = [(0, 0), (1, 0), (0, 1), (1, 1)]
    patch_elements = np.stack(
        [(2 * pj + oy) * m + 2 * pi + ox for ox, oy in offsets], axis=1)
    a5 = np.tile(np.arange(5), 5)
    b5 = np.repeat(np.arange(5), 5)
    patch_q2 = (4 * pj[:, None] + b5) * n2 + 4 * pi[:, None] + a5
    a9 = np.tile(np.arange(3), 3)
    b9 = np.repeat(np.arange(3), 3)
    patch_q1 = (2 * pj[:, None] + b9) * n1 + 2 * pi[:, None] + a9

    return Grid(level, m, h, q2_nodes, q1_nodes, q2_conn, q1_conn, origin,
                patch_elements, patch_q2, patch_q1)


@dataclass(frozen=True)
class DofLayout:
    n_q2: int
    n_q1: int
    boundary_mask: np.ndarray   # per Q2 node
    interior: np.ndarray        # Q2 node ids of interior nodes
    boundary: np.ndarray

    @property
    def n_s(self):
        """Interior Q2 nodes (scalar unknowns per component)."""
        return self.interior.size

    @property
    def n_v(self):
        return 2 * self.interior.size

    @property
    def n_p(self):
        return self.n_q1

    def restrict(self, v_full):
        """Interior part of a full velocity vector."""
        v = np.asarray(v_full).reshape(2, self.n_q2)
        return v[:, self.interior].reshape(-1)

    def extend(self, v_int, boundary_values=None):
        """Full velocity vector from interior values and optional boundary data."""
        out = np.zeros((2, self.n_q2))
        if boundary_values is not None:
            bv = np.asarray(boundary_values).reshape(2, self.n_q2)
            out[:, self.boundary] = bv[:, self.boundary]
        out[:, self.interior] = np.asarray(v_int).reshape(2, -1)
        return out.reshape(-1)


def build_layout(grid: Grid) -> DofLayout:
    n2 = 2 * grid.elements_per_side + 1
    j, i = np.divmod(np.arange(grid.n_q2), n2)
    mask = (i == 0) | (i == n2 - 1) | (j == 0) | (j == n2 - 1)
    return DofLayout(grid.n_q2, grid.n_q1, mask, np.flatnonzero(~mask),
                     np.flatnonzero(mask))


@dataclass(frozen=True)
class LpsConfig:
    delta0: float = 0.25
    enabled: bool = True
    smooth: bool = True      # scale by (1 - 1/Pe) so delta is continuous at Pe = 1

    def __post_init__(self):
        if self.delta0 < 0:
            raise ValueError("delta0 must be nonnegative")


class _Scatter:
    """Fixed map from element-local entries to a CSR data array.

    ``rows`` and ``cols`` are per-element global indices; entries with a negative
    index are dropped (eliminated Dirichlet nodes).
    """

    def __init__(self, rows, cols, shape):
        nr, nc = rows.shape[1], cols.shape[1]
        r = np.broadcast_to(rows[:, :, None], (rows.shape[0], nr, nc)).ravel()
        c = np.broadcast_to(cols[:, None, :], (rows.shape[0], nr, nc)).ravel()
        self.keep = np.flatnonzero((r >= 0) & (c >= 0))
        keys = r[self.keep].astype(np.int64) * shape[1] + c[self.keep]
        uniq, self.pos = np.unique(keys, return_inverse=True)
        rr, self.indices = np.divmod(uniq, shape[1])
        self.indptr = np.zeros(shape[0] + 1, dtype=np.int64)
        np.cumsum(np.bincount(rr, minlength=shape[0]), out=self.indptr[1:])
        self.indices = self.indices.astype(np.int32)
        self.indptr = self.indptr.astype(np.int32)
        self.shape = shape

    def __call__(self, local):
        data = np.bincount(self.pos, weights=np.asarray(local).ravel()[self.keep],
                           minlength=self.indices.size)
        return sp.csr_matrix((data, self.indices.copy(), self.indptr.copy()),
                             shape=self.shape)


def vmul(a, v):
    """Apply a scalar velocity-space matrix to both components of ``v``."""
    x = np.asarray(v).reshape(2, a.shape[1])
    return np.concatenate([a @ x[0], a @ x[1]])


@dataclass
class WindOperators:
    """Wind-dependent matrices for one linearization point."""
    conv: sp.csr_matrix        # N, interior x interior (scalar)
    conv_rows: sp.csr_matrix   # N, interior rows x all Q2 columns
    lps: sp.csr_matrix
    lps_rows: sp.csr_matrix
    conv_p: sp.csr_matrix      # N_p
    lps_p: sp.csr_matrix       # W_p
    delta: np.ndarray          # per-patch stabilization parameter


class Discretization:
    """All level-dependent finite element data for the cavity domain."""

    def __init__(self, level: int, quad_points: int = 4):
        self.grid = build_grid(level)
        self.layout = build_layout(self.grid)
        self.level = self.grid.level
        h = self.grid.element_size
        self.h = h

        xg, wg = gauss_rule(quad_points)
        self.quad_ref = xg
        self.wq = np.outer(wg, wg).ravel() * (h * h / 4.0)  # includes det J
        phi, dxi, deta = _tensor_tables(q2_basis_1d, xg)
        self.phi = phi
        self.dphi = np.stack([dxi, deta]) * (2.0 / h)
        psi, pxi, peta = _tensor_tables(q1_basis_1d, xg)
        self.psi = psi
        self.dpsi = np.stack([pxi, peta]) * (2.0 / h)

        g = self.grid
        lay = self.layout
        q2_int = -np.ones(g.n_q2, dtype=np.int64)
        q2_int[lay.interior] = np.arange(lay.n_s)
        self.q2_to_interior = q2_int
        conn_i = q2_int[g.q2_conn]
        n_s = lay.n_s
        self._s_ii = _Scatter(conn_i, conn_i, (n_s, n_s))
        self._s_ia = _Scatter(conn_i, g.q2_conn, (n_s, g.n_q2))
        self._s_aa = _Scatter(g.q2_conn, g.q2_conn, (g.n_q2, g.n_q2))
        self._s_pp = _Scatter(g.q1_conn, g.q1_conn, (g.n_q1, g.n_q1))
        self._s_pa = _Scatter(g.q1_conn, g.q2_conn, (g.n_q1, g.n_q2))
        self._s_pi = _Scatter(g.q1_conn, conn_i, (g.n_q1, n_s))
        pconn_i = q2_int[g.patch_q2]
        self._lps_ii = _Scatter(pconn_i, pconn_i, (n_s, n_s))
        self._lps_ia = _Scatter(pconn_i, g.patch_q2, (n_s, g.n_q2))
        self._lps_aa = _Scatter(g.patch_q2, g.patch_q2, (g.n_q2, g.n_q2))
        self._lps_pp = _Scatter(g.patch_q1, g.patch_q1, (g.n_q1, g.n_q1))

        # element-local -> patch-local index maps, one per element slot in a patch
        self._patch_loc2 = []
        self._patch_loc1 = []
        for ox, oy in [(0, 0), (1, 0), (0, 1), (1, 1)]:
            b, a = np.divmod(np.arange(9), 3)
            self._patch_loc2.append((2 * oy + b) * 5 + 2 * ox + a)
            b, a = np.divmod(np.arange(4), 2)
            self._patch_loc1.append((oy + b) * 3 + ox + a)

    # -- constant element matrices ---------------------------------------
    @cached_property
    def mass_element(self):
        return np.einsum("q,qi,qj->ij", self.wq, self.phi, self.phi)

    @cached_property
    def stiffness_element(self):
        return np.einsum("q,dqi,dqj->ij", self.wq, self.dphi, self.dphi)

    @cached_property
    def pressure_mass_element(self):
        return np.einsum("q,qi,qj->ij", self.wq, self.psi, self.psi)

    @cached_property
    def pressure_stiffness_element(self):
        return np.einsum("q,dqi,dqj->ij", self.wq, self.dpsi, self.dpsi)

    @cached_property
    def divergence_element(self):
        """(2, 4, 9): -int psi_i d(phi_j)/dx_c for c = 1, 2."""
        return -np.einsum("q,qi,dqj->dij", self.wq, self.psi, self.dphi)

    def _tile(self, local):
        return np.broadcast_to(local, (self.grid.n_elements,) + local.shape)

    # -- scalar velocity-space matrices ----------------------------------
    @cached_property
    def mass(self):
        """Scalar Q2 mass matrix on interior nodes."""
        return self._s_ii(self._tile(self.mass_element))

    @cached_property
    def mass_rows(self):
        return self._s_ia(self._tile(self.mass_element))

    @cached_property
    def mass_full(self):
        return self._s_aa(self._tile(self.mass_element))

    @cached_property
    def stiffness(self):
        return self._s_ii(self._tile(self.stiffness_element))

    @cached_property
    def stiffness_rows(self):
        return self._s_ia(self._tile(self.stiffness_element))

    @cached_property
    def stiffness_full(self):
        return self._s_aa(self._tile(self.stiffness_element))

    # -- divergence ------------------------------------------------------
    @cached_property
    def div_full(self):
        """B on full velocity vectors, shape (n_p, 2 n_q2)."""
        d = self.divergence_element
        return sp.hstack([self._s_pa(self._tile(d[0])),
                          self._s_pa(self._tile(d[1]))]).tocsr()

    @cached_property
    def div(self):
        """B on interior velocity vectors, shape (n_p, n_v)."""
        d = self.divergence_element
        return sp.hstack([self._s_pi(self._tile(d[0])),
                          self._s_pi(self._tile(d[1]))]).tocsr()

    @cached_property
    def div_t(self):
        return self.div.T.tocsr()

    # -- pressure space --------------------------------------------------
    @cached_property
    def pressure_mass(self):
        return self._s_pp(self._tile(self.pressure_mass_element))

    @cached_property
    def pressure_stiffness(self):
        return self._s_pp(self._tile(self.pressure_stiffness_element))

    # -- vector forms ----------------------------------------------------
    def vector(self, a):
        """Componentwise block-diagonal version of a scalar matrix."""
        return sp.block_diag((a, a), format="csr")

    # -- wind-dependent forms --------------------------------------------
    def wind_at_quadrature(self, wind_full):
        w = np.asarray(wind_full, dtype=float)
        if w.size != 2 * self.grid.n_q2:
            raise ValueError(
                f"wind must have {2 * self.grid.n_q2} entries, got {w.size}")
        w = w.reshape(2, -1)[:, self.grid.q2_conn]       # (2, E, 9)
        return np.einsum("qk,cek->ceq", self.phi, w)       # (2, E, Q)

    def _streamline(self, wq, dbasis):
        return np.einsum("ceq,cqj->eqj", wq, dbasis)       # (E, Q, nb)

    def lps_delta(self, wind_full, nu, lps: LpsConfig):
        w = np.asarray(wind_full, dtype=float).reshape(2, -1)
        speed = np.hypot(w[0], w[1])
        wmax = speed[self.grid.patch_q2].max(axis=1)
        h = self.h
        peclet = wmax * h / (2.0 * nu)
        delta = np.zeros_like(wmax)
        active = peclet > 1.0
        delta[active] = lps.delta0 * h / (2.0 * wmax[active])
        if lps.smooth:
            delta[active] *= 1.0 - 1.0 / peclet[active]
        return delta

    def _lps_patch_local(self, g, locs, npatch_nodes, delta):
        """Patch matrices delta_P * int kappa(g_i) kappa(g_j) over each patch."""
        e1 = np.einsum("q,eqi,eqj->eij", self.wq, g, g)
        m1 = np.einsum("q,eqi->ei", self.wq, g)
        pe = self.grid.patch_elements
        npatch = pe.shape[0]
        local = np.zeros((npatch, npatch_nodes, npatch_nodes))
        mp = np.zeros((npatch, npatch_nodes))
        for s, li in enumerate(locs):
            local[:, li[:, None], li[None, :]] += e1[pe[:, s]]
            mp[:, li] += m1[pe[:, s]]
        area = 4.0 * self.h * self.h
        local -= mp[:, :, None] * mp[:, None, :] / area
        return local * delta[:, None, None]

    def wind_operators(self, wind_full, nu, lps: Optional[LpsConfig] = None,
                       full=False):
        lps = LpsConfig() if lps is None else lps
        wq = self.wind_at_quadrature(wind_full)
        g = self._streamline(wq, self.dphi)
        gp = self._streamline(wq, self.dpsi)
        ne = np.einsum("q,qi,eqj->eij", self.wq, self.phi, g)
        npe = np.einsum("q,qi,eqj->eij", self.wq, self.psi, gp)
        npatch = self.grid.patch_elements.shape[0]
        if lps.enabled:
            delta = self.lps_delta(wind_full, nu, lps)
        else:
            delta = np.zeros(npatch)
        if np.any(delta > 0):
            wl = self._lps_patch_local(g, self._patch_loc2, 25, delta)
            wlp = self._lps_patch_local(gp, self._patch_loc1, 9, delta)
        else:
            wl = np.zeros((npatch, 25, 25))
            wlp = np.zeros((npatch, 9, 9))
        ops = WindOperators(self._s_ii(ne), self._s_ia(ne), self._lps_ii(wl),
                            self._lps_ia(wl), self._s_pp(npe), self._lps_pp(wlp),
                            delta)
        if full:
            return ops, self._s_aa(ne), self._lps_aa(wl)
        return ops

    def convection_full(self, wind_full):
        wq = self.wind_at_quadrature(wind_full)
        g = self._streamline(wq, self.dphi)
        return self._s_aa(np.einsum("q,qi,eqj->eij", self.wq, self.phi, g))

    def lps_full(self, wind_full, nu, lps: Optional[LpsConfig] = None):
        return self.wind_operators(wind_full, nu, lps, full=True)[2]

    def adjoint_convection_term(self, v_full, zeta_full):
        """Interior vector of ((grad v)^T zeta, phi_i), both components."""
        conn = self.grid.q2_conn
        v = np.asarray(v_full).reshape(2, -1)[:, conn]       # (2, E, 9)
        z = np.asarray(zeta_full).reshape(2, -1)[:, conn]
        grad = np.einsum("dqk,cek->cdeq", self.dphi, v)      # d v_c / d x_d
        zq = np.einsum("qk,cek->ceq", self.phi, z)
        val = np.einsum("cdeq,ceq->deq", grad, zq)           # component d
        loc = np.einsum("q,qi,deq->dei", self.wq, self.phi, val)
        out = np.zeros((2, self.grid.n_q2))
        for d in range(2):
            out[d] = np.bincount(conn.ravel(), weights=loc[d].ravel(),
                                 minlength=self.grid.n_q2)
        return self.layout.restrict(out.reshape(-1))

    # -- fields ----------------------------------------------------------
    @cached_property
    def quadrature_points(self):
        xq = self.grid.element_origin[:, None, :] + \
            0.5 * self.h * (1.0 + np.stack(np.meshgrid(
                self.quad_ref, self.quad_ref, indexing="xy"), axis=-1).reshape(-1, 2))
        return xq[..., 0], xq[..., 1]

    def load(self, field: FieldFunction, t=0.0, full=False):
        """Load vector (f, phi_i) for a vector field, interior by default."""
        x1, x2 = self.quadrature_points
        vals = np.broadcast_to(np.asarray(field(x1, x2, t), dtype=float),
                               (2,) + x1.shape)
        loc = np.einsum("q,qi,ceq->cei", self.wq, self.phi, vals)
        conn = self.grid.q2_conn.ravel()
        out = np.stack([np.bincount(conn, weights=loc[c].ravel(),
                                    minlength=self.grid.n_q2) for c in range(2)])
        out = out.reshape(-1)
        return out if full else self.layout.restrict(out)

    def interpolate(self, field: FieldFunction, t=0.0, space="q2"):
        """Nodal interpolant; full Q2 vector ``[u1; u2]`` or Q1 scalar vector."""
        if space == "q2":
            x = self.grid.q2_nodes
            vals = np.broadcast_to(np.asarray(field(x[:, 0], x[:, 1], t), dtype=float),
                                   (2, x.shape[0]))
            return np.array(vals, dtype=float).reshape(-1)
        if space == "q1":
            x = self.grid.q1_nodes
            vals = np.broadcast_to(np.asarray(field(x[:, 0], x[:, 1], t), dtype=float),
                                   (x.shape[0],))
            return np.array(vals, dtype=float)
        raise ValueError(f"unknown space {space!r}")

    def boundary_lift(self, g: Optional[FieldFunction], t=0.0):
        """Full velocity vector carrying g at boundary nodes and zero inside."""
        out = np.zeros(2 * self.grid.n_q2)
        if g is None:
            return out
        vals = self.interpolate(g, t).reshape(2, -1)
        out = out.reshape(2, -1)
        out[:, self.layout.boundary] = vals[:, self.layout.boundary]
        return out.reshape(-1)

    def apply_dirichlet_lifting(self, a_full, b_full, g: Optional[FieldFunction],
                                t=0.0):
        """Eliminate boundary velocity nodes from a (velocity, divergence) pair.

        ``a_full`` is a scalar velocity-space matrix on all Q2 nodes and
        ``b_full`` the divergence on full vectors.  Returns the eliminated
        vector operator, the eliminated divergence, and the right-hand-side
        corrections that carry the boundary coupling.
        """
        lay = self.layout
        lift = self.boundary_lift(g, t)
        a_int = self.vector(a_full[lay.interior][:, lay.interior])
        idx = np.concatenate([lay.interior, lay.interior + lay.n_q2])
        a_vec = self.vector(a_full)
        rhs_v = -(a_vec @ lift)[idx]
        rhs_p = -(b_full @ lift)
        return a_int, b_full[:, idx].tocsr(), rhs_v, rhs_p

    # -- multigrid transfer ----------------------------------------------
    def prolongation_q2(self):
        """Interior Q2 prolongation from level-1 to this level (scalar)."""
        p1 = _prolong_1d(self.grid.elements_per_side // 2, q2_basis_1d, 2)
        p = sp.kron(p1, p1, format="csr")
        coarse = build_layout(build_grid(self.level - 1))
        return p[self.layout.interior][:, coarse.interior].tocsr()

    def prolongation_q1(self):
        p1 = _prolong_1d(self.grid.elements_per_side // 2, q1_basis_1d, 1)
        return sp.kron(p1, p1, format="csr")

    def q1_to_q2_nodes(self):
        """Bilinear interpolation of a Q1 field onto the Q2 nodes of this level."""
        p1 = _prolong_1d(self.grid.elements_per_side, q1_basis_1d, 1)
        return sp.kron(p1, p1, format="csr")


def _prolong_1d(mc, basis_1d, p):
    """Nodal interpolation from mc coarse elements of degree p to 2 mc elements."""
    nf = 2 * mc * p + 1
    nc = mc * p + 1
    rows, cols, vals = [], [], []
    for i in range(nf):
        pos = i / (2.0 * p)                   # position in coarse element units
        ec = min(int(np.floor(pos)), mc - 1)
        xi = 2.0 * (pos - ec) - 1.0
        v, _ = basis_1d(np.array([xi]))
        for a in range(p + 1):
            if abs(v[a, 0]) > 1e-15:
                rows.append(i)
                cols.append(ec * p + a)
                vals.append(v[a, 0])
    return sp.csr_matrix((vals, (rows, cols)), shape=(nf, nc))


def write_matrix_market(path, a, comment=""):
    """Debug dump of a sparse matrix in MatrixMarket coordinate format."""
    scipy.io.mmwrite(path, sp.coo_matrix(a), comment=comment)
