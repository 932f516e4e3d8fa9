"""Geometric multigrid V-cycles with Galerkin coarse operators."""

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from . import _kernels

__all__ = ["MgHierarchy", "build_hierarchy", "mg_vcycle", "mg_vcycle_reference",
           "PinnedPressureSolver", "pinned_pressure_solve"]


@dataclass
class _Level:
    a: sp.csr_matrix
    lu: np.ndarray = None       # ILU(0) factors on the pattern of ``a``
    dpos: np.ndarray = None     # diagonal positions within each row
    p: sp.csr_matrix = None     # from the next coarser level to this one
    r: sp.csr_matrix = None


@dataclass
class MgHierarchy:
    levels: list
    coarse_lu: tuple
    cycles: int = 4
    pre: int = 2
    post: int = 2
    sizes: list = field(default_factory=list)
    packed: tuple = None

    @property
    def n(self):
        return self.levels[0].a.shape[0]


def _pack(mats):
    """Concatenate CSR blocks; returns (indptr, indices, data, row offsets, data offsets)."""
    ptr, idx, dat, ro, do = [], [], [], [], []
    r = d = 0
    for m in mats:
        ptr.append(m.indptr.astype(np.int64))
        idx.append(m.indices.astype(np.int64))
        dat.append(m.data.astype(float))
        ro.append(r)
        do.append(d)
        r += m.shape[0] + 1
        d += m.nnz
    cat = np.concatenate
    return (cat(ptr), cat(idx) if idx else np.zeros(0, np.int64),
            cat(dat) if dat else np.zeros(0), np.array(ro, np.int64), np.array(do, np.int64))


def _pack_hierarchy(levels, coarse_lu):
    sizes = np.array([lev.a.shape[0] for lev in levels], dtype=np.int64)
    voff = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
    a = _pack([lev.a for lev in levels])
    p = _pack([_canonical(lev.p) for lev in levels[:-1]])
    r = _pack([_canonical(lev.r) for lev in levels[:-1]])
    lu = np.concatenate([lev.lu for lev in levels[:-1]] + [levels[-1].a.data])
    dpos = np.concatenate([lev.dpos for lev in levels[:-1]]
                          + [np.zeros(sizes[-1], np.int64)])
    nc = sizes[-1]
    coarse_inv = sla.lu_solve(coarse_lu, np.eye(nc))
    return (sizes, voff) + a + (lu, dpos) + p + r + (coarse_inv,)


def _canonical(a):
    a = sp.csr_matrix(a, dtype=float)
    a.sum_duplicates()
    a.sort_indices()
    a.indptr = a.indptr.astype(np.int32)
    a.indices = a.indices.astype(np.int32)
    return a


def build_hierarchy(a, prolongations, cycles=4, pre=2, post=2):
    """Hierarchy for ``a`` from prolongations ordered finest first.

    ``prolongations[i]`` maps level i+1 (coarser) onto level i.
    """
    levels = []
    cur = _canonical(a)
    for p in prolongations:
        if cur.shape[0] != p.shape[0]:
            raise ValueError("prolongation does not match operator size")
        p = sp.csr_matrix(p)
        r = p.T.tocsr()
        if np.any(cur.diagonal() == 0.0):
            raise np.linalg.LinAlgError("zero diagonal entry in smoother")
        lu, dpos = _kernels.ilu0(cur.indptr, cur.indices, cur.data)
        levels.append(_Level(cur, lu, dpos, p, r))
        cur = _canonical(r @ cur @ p)
    levels.append(_Level(cur))
    dense = cur.toarray()
    lu = sla.lu_factor(dense, check_finite=True)
    if np.any(np.abs(np.diag(lu[0])) <= 1e-14 * max(1.0, np.abs(dense).max())):
        raise np.linalg.LinAlgError("singular coarse-grid operator")
    sizes = [lev.a.shape[0] for lev in levels]
    if any(s1 <= s2 for s1, s2 in zip(sizes, sizes[1:])):
        raise ValueError("level dimensions must strictly decrease")
    packed = _pack_hierarchy(levels, lu) if len(levels) > 1 else None
    return MgHierarchy(levels, lu, cycles, pre, post, sizes, packed)


def _smooth(lev, b, x, sweeps):
    a = lev.a
    _kernels.ilu_sweeps(a.indptr, a.indices, a.data, lev.lu, lev.dpos, b, x, sweeps)


def _vcycle(h, i, b, x):
    lev = h.levels[i]
    if i == len(h.levels) - 1:
        x[:] = sla.lu_solve(h.coarse_lu, b)
        return
    _smooth(lev, b, x, h.pre)
    res = np.empty_like(b)
    a = lev.a
    _kernels.residual(a.indptr, a.indices, a.data, b, x, res)
    bc = np.ascontiguousarray(lev.r @ res)
    xc = np.zeros_like(bc)
    _vcycle(h, i + 1, bc, xc)
    x += lev.p @ xc
    _smooth(lev, b, x, h.post)


def mg_vcycle(h: MgHierarchy, r, cycles=None):
    """Approximate inverse action: ``cycles`` V-cycles from a zero guess.

    ``r`` may be a vector or an (n, k) array of right-hand sides.
    """
    cycles = h.cycles if cycles is None else cycles
    r = np.asarray(r, dtype=float)
    vec = r.ndim == 1
    b = np.ascontiguousarray(r.reshape(r.shape[0], -1))
    if h.packed is None:
        x = sla.lu_solve(h.coarse_lu, b)
    else:
        x = _kernels.vcycles(*h.packed, b, cycles, h.pre, h.post)
    return x[:, 0] if vec else x


def mg_vcycle_reference(h: MgHierarchy, r, cycles=None):
    """Recursive V-cycles in plain Python; same iteration as :func:`mg_vcycle`."""
    cycles = h.cycles if cycles is None else cycles
    r = np.asarray(r, dtype=float)
    vec = r.ndim == 1
    b = np.ascontiguousarray(r.reshape(r.shape[0], -1))
    x = np.zeros_like(b)
    if len(h.levels) == 1:
        x[:] = sla.lu_solve(h.coarse_lu, b)
        return x[:, 0] if vec else x
    a = h.levels[0].a
    for c in range(cycles):
        if c == 0:
            _vcycle(h, 0, b, x)
        else:
            res = np.empty_like(b)
            _kernels.residual(a.indptr, a.indices, a.data, b, x, res)
            e = np.zeros_like(b)
            _vcycle(h, 0, res, e)
            x += e
    return x[:, 0] if vec else x


class PinnedPressureSolver:
    """Multigrid for the pressure Laplacian with the first node pinned to zero.

    The result is projected onto mean-zero vectors (unit weights).
    """

    def __init__(self, kp, prolongations, cycles=2, pre=2, post=2):
        ps = [p[1:, 1:] for p in prolongations]
        self.hierarchy = build_hierarchy(kp[1:, 1:], ps, cycles, pre, post)
        self.n = kp.shape[0]

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        vec = r.ndim == 1
        b = r.reshape(self.n, -1)
        x = np.zeros_like(b)
        x[1:] = mg_vcycle(self.hierarchy, b[1:])
        x -= x.mean(axis=0)
        return x[:, 0] if vec else x


def pinned_pressure_solve(solver: PinnedPressureSolver, r):
    return solver(r)
