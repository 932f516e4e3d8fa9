"""Chebyshev semi-iteration for mass matrices."""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

__all__ = ["ChebParams", "estimate_mass_bounds", "element_bounds",
           "chebyshev_mass_apply", "MassSolver"]


@dataclass(frozen=True)
class ChebParams:
    lmin: float
    lmax: float
    steps: int = 20

    def __post_init__(self):
        if not (0.0 < self.lmin <= self.lmax) or not np.isfinite(self.lmax):
            raise ValueError(f"invalid Chebyshev bounds [{self.lmin}, {self.lmax}]")
        if self.steps < 1:
            raise ValueError("steps must be positive")


def gershgorin_bounds(m):
    m = sp.csr_matrix(m)
    d = m.diagonal()
    off = np.asarray(abs(m).sum(axis=1)).ravel() - np.abs(d)
    s = off / d
    return float(np.min(1.0 - s)), float(np.max(1.0 + s))


def element_bounds(local):
    """Spectral interval of diag(M_e)^-1 M_e for an element matrix.

    For an assembled matrix built from such elements the spectrum of
    diag(M)^-1 M lies inside this interval (also after Dirichlet elimination).
    """
    local = np.asarray(local, dtype=float)
    s = 1.0 / np.sqrt(np.diag(local))
    ev = np.linalg.eigvalsh(local * s[:, None] * s[None, :])
    return float(ev[0]), float(ev[-1])


def _power_estimate(apply, n, iters, rng):
    x = rng.standard_normal(n)
    lam = 0.0
    for _ in range(iters):
        y = apply(x)
        lam = float(np.linalg.norm(y) / np.linalg.norm(x))
        x = y / np.linalg.norm(y)
    return lam


def estimate_mass_bounds(m, steps=20, element=None, tighten=0, seed=0):
    """Enclosure of the spectrum of diag(M)^-1 M.

    Starts from Gershgorin row sums.  An element matrix, if given, supplies a
    certified interval that is intersected with it.  ``tighten`` power
    iterations shrink the upper end and, if Gershgorin gives no positive lower
    end, estimate it (with a safety margin); such estimates are not certified.
    """
    lo, hi = gershgorin_bounds(m)
    if element is not None:
        elo, ehi = element_bounds(element)
        lo, hi = max(lo, elo), min(hi, ehi)
    if tighten > 0 or lo <= 0.0:
        m = sp.csr_matrix(m)
        dinv = 1.0 / m.diagonal()
        rng = np.random.default_rng(seed)
        iters = max(tighten, 50)
        est_hi = _power_estimate(lambda x: dinv * (m @ x), m.shape[0], iters, rng)
        if tighten > 0:
            hi = min(hi, 1.05 * est_hi)
        if lo <= 0.0:
            top = hi
            mu = _power_estimate(lambda x: top * x - dinv * (m @ x), m.shape[0],
                                 iters, rng)
            lo = 0.9 * (top - mu)
            if lo <= 0.0:
                raise ValueError("could not bound the smallest eigenvalue")
    return ChebParams(lo, hi, steps)


class MassSolver:
    """Fixed-step Chebyshev approximation of M^-1 (Jacobi preconditioned)."""

    def __init__(self, m, params: ChebParams):
        self.m = sp.csr_matrix(m)
        self.dinv = 1.0 / self.m.diagonal()
        self.params = params

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        dinv = self.dinv if r.ndim == 1 else self.dinv[:, None]
        lmin, lmax, steps = self.params.lmin, self.params.lmax, self.params.steps
        theta = 0.5 * (lmax + lmin)
        delta = 0.5 * (lmax - lmin)
        if delta <= 1e-14 * theta:
            return dinv * r / theta
        sigma = theta / delta
        rho = 1.0 / sigma
        x = np.zeros_like(r)
        res = r.copy()
        d = dinv * res / theta
        for _ in range(steps):
            x += d
            res -= self.m @ d
            rho_new = 1.0 / (2.0 * sigma - rho)
            d = (rho_new * rho) * d + (2.0 * rho_new / delta) * (dinv * res)
            rho = rho_new
        return x


def chebyshev_mass_apply(m, r, params: ChebParams):
    return MassSolver(m, params)(r)
