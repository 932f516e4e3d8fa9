"""Restarted flexible GMRES and fixed-step GMRES."""

import time
from dataclasses import dataclass, field

import numpy as np

__all__ = ["KrylovStats", "fgmres", "gmres_fixed"]


@dataclass
class KrylovStats:
    iterations: int = 0
    history: list = field(default_factory=list)   # relative residuals, first entry 1
    converged: bool = False
    wall_time: float = 0.0


def _as_apply(op):
    if op is None:
        return lambda x: x
    if callable(op):
        return op
    if hasattr(op, "matvec"):
        return op.matvec
    return lambda x: op @ x


def _givens(a, b):
    if b == 0.0:
        return 1.0, 0.0
    r = np.hypot(a, b)
    return a / r, b / r


def _arnoldi_cycle(apply_a, apply_p, r0, beta, steps, stop):
    """One flexible Arnoldi cycle; returns the correction and residual estimates."""
    n = r0.size
    v = np.zeros((steps + 1, n))
    z = np.zeros((steps, n))
    hess = np.zeros((steps + 1, steps))
    cs = np.zeros(steps)
    sn = np.zeros(steps)
    g = np.zeros(steps + 1)
    g[0] = beta
    v[0] = r0 / beta
    est = []
    j = 0
    for j in range(steps):
        z[j] = apply_p(v[j])
        w = apply_a(z[j])
        for _ in range(2):
            c = v[:j + 1] @ w
            w = w - c @ v[:j + 1]
            hess[:j + 1, j] += c
        hn = np.linalg.norm(w)
        hess[j + 1, j] = hn
        for i in range(j):
            t = cs[i] * hess[i, j] + sn[i] * hess[i + 1, j]
            hess[i + 1, j] = -sn[i] * hess[i, j] + cs[i] * hess[i + 1, j]
            hess[i, j] = t
        cs[j], sn[j] = _givens(hess[j, j], hess[j + 1, j])
        hess[j, j] = cs[j] * hess[j, j] + sn[j] * hess[j + 1, j]
        hess[j + 1, j] = 0.0
        g[j + 1] = -sn[j] * g[j]
        g[j] = cs[j] * g[j]
        est.append(abs(g[j + 1]))
        breakdown = hn <= 1e-14 * beta
        if stop(abs(g[j + 1])) or breakdown:
            j += 1
            break
        v[j + 1] = w / hn
    else:
        j = steps
    y = np.zeros(j)
    if j:
        y = _back_substitute(hess[:j, :j], g[:j])
    return y @ z[:j], est


def _back_substitute(r, g):
    n = g.size
    y = np.zeros(n)
    for i in range(n - 1, -1, -1):
        if r[i, i] == 0.0:
            y[i] = 0.0
            continue
        y[i] = (g[i] - r[i, i + 1:] @ y[i + 1:]) / r[i, i]
    return y


def gmres_fixed(op, prec, b, steps=5):
    """Iterate after ``steps`` right-preconditioned GMRES steps from zero.

    Stops early on (happy) breakdown and returns the current iterate.
    """
    apply_a = _as_apply(op)
    apply_p = _as_apply(prec)
    b = np.asarray(b, dtype=float)
    beta = np.linalg.norm(b)
    if beta == 0.0:
        return np.zeros_like(b)
    dx, _ = _arnoldi_cycle(apply_a, apply_p, b, beta, steps, lambda r: False)
    return dx


def fgmres(op, prec, b, tol=1e-6, restart=10, maxit=1000, x0=None, callback=None):
    """Flexible GMRES(restart) with right preconditioning.

    Returns ``(x, stats)``; ``stats.history`` holds ||r_k|| / ||b|| per iteration
    (Arnoldi estimates inside a cycle, true residuals at restarts).
    """
    t0 = time.perf_counter()
    apply_a = _as_apply(op)
    apply_p = _as_apply(prec)
    b = np.asarray(b, dtype=float)
    stats = KrylovStats()
    bnorm = np.linalg.norm(b)
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=float)
    if bnorm == 0.0:
        stats.history = [0.0]
        stats.converged = True
        return np.zeros_like(b), stats
    r = b - apply_a(x) if x0 is not None else b.copy()
    beta = np.linalg.norm(r)
    stats.history.append(beta / bnorm)
    while beta / bnorm > tol and stats.iterations < maxit:
        steps = min(restart, maxit - stats.iterations)
        dx, est = _arnoldi_cycle(apply_a, apply_p, r, beta, steps,
                                 lambda res: res <= tol * bnorm)
        x = x + dx
        stats.iterations += len(est)
        stats.history.extend(e / bnorm for e in est)
        r = b - apply_a(x)
        beta = np.linalg.norm(r)
        stats.history[-1] = beta / bnorm
        if callback is not None:
            callback(x, beta / bnorm)
        if len(est) == 0:
            break
    stats.converged = bool(beta / bnorm <= tol)
    stats.wall_time = time.perf_counter() - t0
    return x, stats
