"""Numba kernels for the multigrid smoothers and V-cycles."""

import numba
import numpy as np


@numba.njit(cache=True)
def residual(indptr, indices, data, b, x, out):
    n, k = x.shape
    for i in range(n):
        for c in range(k):
            out[i, c] = b[i, c]
        for jj in range(indptr[i], indptr[i + 1]):
            a = data[jj]
            j = indices[jj]
            for c in range(k):
                out[i, c] -= a * x[j, c]


@numba.njit(cache=True)
def _csr_mul(indptr, indices, data, ro, co, do, x, xo, out, oo, nrow, k, accumulate):
    """out[oo:oo+nrow] (+)= A @ x[xo:...] for a CSR block stored at offsets (ro, co, do)."""
    for i in range(nrow):
        for c in range(k):
            if not accumulate:
                out[oo + i, c] = 0.0
        for jj in range(indptr[ro + i], indptr[ro + i + 1]):
            a = data[do + jj]
            j = indices[co + jj]
            for c in range(k):
                out[oo + i, c] += a * x[xo + j, c]


@numba.njit(cache=True)
def ilu0(indptr, indices, data):
    """ILU(0) factors on the pattern of a CSR matrix with sorted indices.

    Returns the packed L (unit diagonal, strictly lower) and U values and the
    position of each diagonal entry.  Tiny pivots are replaced by the original
    diagonal so the factorization never breaks down.
    """
    n = indptr.size - 1
    lu = data.copy()
    dpos = np.empty(n, np.int64)
    for i in range(n):
        dpos[i] = -1
        for jj in range(indptr[i], indptr[i + 1]):
            if indices[jj] == i:
                dpos[i] = jj
        if dpos[i] < 0:
            raise ValueError("missing diagonal entry")
    pos = -np.ones(n, np.int64)
    for i in range(n):
        for jj in range(indptr[i], indptr[i + 1]):
            pos[indices[jj]] = jj
        for jj in range(indptr[i], indptr[i + 1]):
            k = indices[jj]
            if k >= i:
                break
            lu[jj] /= lu[dpos[k]]
            f = lu[jj]
            for kk in range(dpos[k] + 1, indptr[k + 1]):
                p = pos[indices[kk]]
                if p >= 0:
                    lu[p] -= f * lu[kk]
        d = lu[dpos[i]]
        if abs(d) <= 1e-12 * abs(data[dpos[i]]):
            lu[dpos[i]] = data[dpos[i]]
        for jj in range(indptr[i], indptr[i + 1]):
            pos[indices[jj]] = -1
    return lu, dpos


@numba.njit(cache=True)
def _ilu_block(indptr, indices, data, lu, dpos, ro, do, vo, b, x, res, n, k):
    """One sweep x += (LU)^-1 (b - A x) on a packed level."""
    for i in range(n):
        for c in range(k):
            res[vo + i, c] = b[vo + i, c]
        for jj in range(indptr[ro + i], indptr[ro + i + 1]):
            a = data[do + jj]
            j = indices[do + jj]
            for c in range(k):
                res[vo + i, c] -= a * x[vo + j, c]
    for i in range(n):
        for jj in range(indptr[ro + i], indptr[ro + i + 1]):
            j = indices[do + jj]
            if j >= i:
                break
            f = lu[do + jj]
            for c in range(k):
                res[vo + i, c] -= f * res[vo + j, c]
    for i in range(n - 1, -1, -1):
        d = dpos[vo + i]
        for jj in range(d + 1, indptr[ro + i + 1]):
            f = lu[do + jj]
            j = indices[do + jj]
            for c in range(k):
                res[vo + i, c] -= f * res[vo + j, c]
        piv = lu[do + d]
        for c in range(k):
            res[vo + i, c] /= piv
    for i in range(n):
        for c in range(k):
            x[vo + i, c] += res[vo + i, c]


@numba.njit(cache=True)
def ilu_sweeps(indptr, indices, data, lu, dpos, b, x, sweeps):
    """``sweeps`` ILU(0) smoothing steps on a single (unpacked) level."""
    res = np.empty_like(x)
    for _ in range(sweeps):
        _ilu_block(indptr, indices, data, lu, dpos, 0, 0, 0, b, x, res,
                   x.shape[0], x.shape[1])


@numba.njit(cache=True)
def vcycles(sizes, voff, a_ptr, a_idx, a_dat, a_ro, a_do, lu, dpos,
            p_ptr, p_idx, p_dat, p_ro, p_do, r_ptr, r_idx, r_dat, r_ro, r_do,
            coarse_inv, b0, cycles, pre, post):
    """``cycles`` V-cycles with ILU(0) smoothing from a zero guess.

    All level operators are packed CSR blocks; ``voff`` gives each level's row
    offset into the stacked work vectors.
    """
    nlev = sizes.shape[0]
    k = b0.shape[1]
    tot = voff[nlev]
    b = np.zeros((tot, k))
    x = np.zeros((tot, k))
    res = np.zeros((tot, k))
    for i in range(sizes[0]):
        for c in range(k):
            b[i, c] = b0[i, c]
    for _ in range(cycles):
        for lv in range(nlev - 1):
            n = sizes[lv]
            vo = voff[lv]
            if lv > 0:
                for i in range(n):
                    for c in range(k):
                        x[vo + i, c] = 0.0
            for _s in range(pre):
                _ilu_block(a_ptr, a_idx, a_dat, lu, dpos, a_ro[lv], a_do[lv], vo, b, x,
                           res, n, k)
            _csr_mul(a_ptr, a_idx, a_dat, a_ro[lv], a_do[lv], a_do[lv], x, vo, res, vo, n, k,
                     False)
            for i in range(n):
                for c in range(k):
                    res[vo + i, c] = b[vo + i, c] - res[vo + i, c]
            _csr_mul(r_ptr, r_idx, r_dat, r_ro[lv], r_do[lv], r_do[lv], res, vo, b,
                     voff[lv + 1], sizes[lv + 1], k, False)
        lc = nlev - 1
        vc = voff[lc]
        nc = sizes[lc]
        for i in range(nc):
            for c in range(k):
                acc = 0.0
                for j in range(nc):
                    acc += coarse_inv[i, j] * b[vc + j, c]
                x[vc + i, c] = acc
        for lv in range(nlev - 2, -1, -1):
            n = sizes[lv]
            vo = voff[lv]
            _csr_mul(p_ptr, p_idx, p_dat, p_ro[lv], p_do[lv], p_do[lv], x, voff[lv + 1], x, vo,
                     n, k, True)
            for _s in range(post):
                _ilu_block(a_ptr, a_idx, a_dat, lu, dpos, a_ro[lv], a_do[lv], vo, b, x,
                           res, n, k)
    out = np.empty((sizes[0], k))
    for i in range(sizes[0]):
        for c in range(k):
            out[i, c] = x[i, c]
    return out
