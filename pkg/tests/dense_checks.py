"""Dense level-2 spectral checks shared by unit and acceptance tests."""

import numpy as np

from nscontrol import SolverConfig, make_problem
from nscontrol import crank_nicolson as cn
from nscontrol import stationary as st
from nscontrol.krylov import fgmres
from nscontrol.tools import get_tools
from oracles import dense

EXACT = SolverConfig(exact_blocks=True)


def stationary_kkt(beta, level=2, stokes=True, nu=1.0, config=EXACT, state=None):
    spec = make_problem("cavity-stationary", nu=nu, beta=beta, stokes=stokes)
    tools = get_tools(level, config)
    state = st.zero_state(tools, spec) if state is None else state
    return st.StationaryKkt(tools, spec, config, state, stokes)


def cn_kkt(beta, level=2, n_t=2, stokes=True, nu=1.0, config=EXACT, state=None):
    spec = make_problem("cavity-instationary", nu=nu, beta=beta, scheme="cn",
                        level=level, tau=2.0 / n_t, stokes=stokes)
    tools = get_tools(level, config)
    grid = cn.TimeGridCN(spec.tf, spec.n_t)
    state = cn.initial_state(tools, spec, grid) if state is None else state
    return cn.CnKkt(tools, spec, grid, config, state, stokes)


def pin_pressures(a, n_vel, n_p, blocks=2):
    """Drop the first pressure unknown of each pressure block (row and column)."""
    keep = np.ones(a.shape[0], bool)
    for k in range(blocks):
        keep[n_vel + k * n_p] = False
    return a[np.ix_(keep, keep)], keep


def exact_preconditioner(beta=1.0, seed=0):
    """Block lower-triangular P = [Phi 0; Psi -S] with the exact Schur complement.

    P^-1 A is block upper triangular with identity diagonal blocks, hence
    defective (Jordan 2-blocks).  A direct dense eigensolve of such a matrix
    is only accurate to about sqrt(eps) * ||P^-1 A||, so the spectrum is read
    from the diagonal blocks once the (2,1) block is shown to be at roundoff.
    """
    kkt = stationary_kkt(beta)
    n2 = 2 * kkt.n_v
    a, _ = pin_pressures(kkt.to_sparse().toarray(), n2, kkt.n_p)
    phi, psi = a[:n2, :n2], a[n2:, :n2]
    s = psi @ np.linalg.solve(phi, psi.T)
    p = np.block([[phi, np.zeros_like(psi.T)], [psi, -s]])
    pa = np.linalg.solve(p, a)
    scale = np.abs(pa).max()
    ev_blocks = np.concatenate([np.linalg.eigvals(pa[:n2, :n2]),
                                np.linalg.eigvals(pa[n2:, n2:])])
    b = np.random.default_rng(seed).standard_normal(a.shape[0])
    _, stats = fgmres(a, lambda r: np.linalg.solve(p, r), b, tol=1e-12, restart=10)
    return {
        "block21": float(np.abs(pa[n2:, :n2]).max() / scale),
        "eig_dev": float(np.abs(ev_blocks - 1.0).max()),
        "raw_eig_dev": float(np.abs(np.linalg.eigvals(pa) - 1.0).max()),
        "nilpotent": float(np.abs((pa - np.eye(len(pa))) @ (pa - np.eye(len(pa)))).max()
                           / scale ** 2),
        "iterations": stats.iterations,
        "residual": stats.history[-1],
    }


def _schur_of_phi(phi, n):
    """S = -(Phi_22 - Phi_21 Phi_11^-1 Phi_12), the negated velocity-block Schur complement."""
    return -(phi[n:, n:] - phi[n:, :n] @ np.linalg.solve(phi[:n, :n], phi[:n, n:]))


def schur_spectrum_stationary(beta):
    kkt = stationary_kkt(beta)
    nv = kkt.n_v
    phi = kkt.to_sparse().toarray()[:2 * nv, :2 * nv]
    s = _schur_of_phi(phi, nv)
    s_hat_inv = dense(lambda w: st.schur_phi_inverse(kkt, w), nv)
    return np.linalg.eigvals(s_hat_inv @ s)


def schur_spectrum_cn(beta, n_t=2):
    """Spectrum of S_hat^-1 S for the T-transformed CN velocity block."""
    kkt = cn_kkt(beta, n_t=n_t)
    na = kkt.n_t * kkt.n_v
    phi = kkt.to_sparse().toarray()[:2 * na, :2 * na]
    s = _schur_of_phi(phi, na)
    s_hat_inv = dense(lambda w: cn.schur_phi_inverse_cn(kkt, w.reshape(kkt.n_t, -1)).ravel(),
                      na)
    return np.linalg.eigvals(s_hat_inv @ s)
