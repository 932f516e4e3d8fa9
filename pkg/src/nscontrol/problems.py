"""Problem catalog: data fields for the cavity and manufactured problems."""

from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np

__all__ = ["ProblemSpec", "KINDS", "make_problem", "zero_field",
           "cavity_lid", "ramp_lid", "vortex_pair", "manufactured_fields"]

FieldFunction = Callable[[np.ndarray, np.ndarray, float], object]

KINDS = ("cavity-stationary", "cavity-instationary", "stokes-manufactured", "custom")
SCHEMES = ("none", "be", "cn")


def zero_field(x1, x2, t):
    z = np.zeros_like(np.asarray(x1, dtype=float))
    return z, z.copy()


def _on_lid(x1, x2):
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    return np.isclose(x2, 1.0) & (np.abs(x1) < 1.0 - 1e-12)


def cavity_lid(x1, x2, t):
    """(1, 0) on the open top edge, zero elsewhere on the boundary."""
    lid = _on_lid(x1, x2)
    return lid.astype(float), np.zeros(lid.shape)


def ramp_lid(x1, x2, t):
    lid = _on_lid(x1, x2)
    speed = t if t < 1.0 else 1.0
    return speed * lid.astype(float), np.zeros(lid.shape)


def vortex_pair(x1, x2, t):
    """Two counter-rotating vortices, amplitude cos(pi t / 2)."""
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    a, b = (100.0 / 49.0), (100.0 / 99.0)
    c1 = 1.0 - np.sqrt((a * (x1 - 0.5)) ** 2 + (b * x2) ** 2)
    c2 = 1.0 - np.sqrt((a * (x1 + 0.5)) ** 2 + (b * x2) ** 2)
    amp = np.cos(0.5 * np.pi * t)
    u1 = np.zeros(np.broadcast(x1, x2).shape)
    u2 = np.zeros_like(u1)
    m1 = c1 >= 0.0
    m2 = (~m1) & (c2 >= 0.0)
    u1 = np.where(m1, c1 * amp * b * b * x2, u1)
    u2 = np.where(m1, -c1 * amp * a * a * (x1 - 0.5), u2)
    u1 = np.where(m2, -c2 * amp * b * b * x2, u1)
    u2 = np.where(m2, c2 * amp * a * a * (x1 + 0.5), u2)
    return u1, u2


def manufactured_fields(beta, tf=2.0):
    """Forcing, desired state, and exact solution of the CN Stokes test."""

    def v_exact(x1, x2, t):
        e = np.exp(tf - t)
        return e * 20.0 * x1 * x2 ** 3, e * (5.0 * x1 ** 4 - 5.0 * x2 ** 4)

    def p_exact(x1, x2, t):
        return np.exp(tf - t) * (60.0 * x1 ** 2 * x2 - 20.0 * x2 ** 3)

    def bubble(x1, x2):
        return (2.0 * x2 * (x1 ** 2 - 1) ** 2 * (x2 ** 2 - 1),
                -2.0 * x1 * (x1 ** 2 - 1) * (x2 ** 2 - 1) ** 2)

    def zeta_exact(x1, x2, t):
        z1, z2 = bubble(x1, x2)
        s = beta * (np.exp(tf - t) - 1.0)
        return s * z1, s * z2

    def mu_exact(x1, x2, t):
        return beta * np.exp(tf - t) * 4.0 * x1 * x2

    def forcing(x1, x2, t):
        e = np.exp(tf - t)
        z1, z2 = bubble(x1, x2)
        f1 = e * (-20.0 * x1 * x2 ** 3 - 2.0 * x2 * (x1 ** 2 - 1) ** 2 * (x2 ** 2 - 1))
        f2 = e * (5.0 * (x2 ** 4 - x1 ** 4) + 2.0 * x1 * (x1 ** 2 - 1) * (x2 ** 2 - 1) ** 2)
        return f1 + z1, f2 + z2

    def desired(x1, x2, t):
        e = np.exp(tf - t)
        s1 = x2 * (2.0 * (3 * x1 ** 2 - 1) * (x2 ** 2 - 1) + 3.0 * (x1 ** 2 - 1) ** 2)
        s2 = -x1 * (3.0 * (x2 ** 2 - 1) ** 2 + 2.0 * (x1 ** 2 - 1) * (3 * x2 ** 2 - 1))
        d1 = 20.0 * x1 * x2 ** 3 + 2.0 * beta * x2 * (
            (x1 ** 2 - 1) ** 2 * (x2 ** 2 - 7) - 4.0 * (3 * x1 ** 2 - 1) * (x2 ** 2 - 1) + 2.0)
        d2 = 5.0 * (x1 ** 4 - x2 ** 4) - 2.0 * beta * x1 * (
            (x2 ** 2 - 1) ** 2 * (x1 ** 2 - 7) - 4.0 * (x1 ** 2 - 1) * (3 * x2 ** 2 - 1) - 2.0)
        return 4.0 * beta * s1 + e * d1, 4.0 * beta * s2 + e * d2

    return dict(f=forcing, v_d=desired, v=v_exact, p=p_exact, zeta=zeta_exact,
                mu=mu_exact)


@dataclass(frozen=True)
class ProblemSpec:
    kind: str
    nu: float
    beta: float
    scheme: str = "none"
    tf: float = 2.0
    n_t: Optional[int] = None
    stokes: bool = False        # drop convection (Stokes control, nu = 1)
    f: FieldFunction = zero_field
    g: FieldFunction = zero_field
    v_d: FieldFunction = zero_field
    v0: FieldFunction = zero_field
    exact_v: Optional[FieldFunction] = None
    exact_zeta: Optional[FieldFunction] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown problem kind {self.kind!r}")
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if not (self.nu > 0 and self.beta > 0):
            raise ValueError("nu and beta must be positive")
        if self.kind == "cavity-stationary" and self.scheme != "none":
            raise ValueError("the stationary cavity has no time scheme")
        if self.kind in ("cavity-instationary", "stokes-manufactured") and \
                self.scheme == "none":
            raise ValueError(f"{self.kind} needs a time scheme (be or cn)")
        if self.kind == "stokes-manufactured" and self.scheme != "cn":
            raise ValueError("the manufactured problem is defined for cn")
        if self.n_t is not None and self.n_t < 1:
            raise ValueError("n_t must be positive")

    @property
    def tau(self):
        return self.tf / self.n_t

    def with_time_steps(self, n_t):
        return replace(self, n_t=int(n_t))


def make_problem(kind, nu=1.0, beta=1.0, scheme=None, level=None, tau=None,
                 stokes=False):
    """Catalog problem.  ``tau`` defaults to 0.05 (be) or h = 2^(1-level) (cn)."""
    if kind == "cavity-stationary":
        return ProblemSpec(kind, nu, beta, "none", g=cavity_lid, stokes=stokes)
    if kind == "cavity-instationary":
        scheme = scheme or "be"
        tf = 2.0
        n_t = _time_steps(scheme, level, tau, tf)
        return ProblemSpec(kind, nu, beta, scheme, tf, n_t, stokes, g=ramp_lid,
                           v_d=vortex_pair)
    if kind == "stokes-manufactured":
        tf = 2.0
        fields = manufactured_fields(beta, tf)
        n_t = _time_steps("cn", level, tau, tf)
        return ProblemSpec(kind, 1.0, beta, "cn", tf, n_t, True, f=fields["f"],
                           g=fields["v"], v_d=fields["v_d"], v0=fields["v"],
                           exact_v=fields["v"], exact_zeta=fields["zeta"])
    raise ValueError(f"unknown problem kind {kind!r}")


def _time_steps(scheme, level, tau, tf):
    if tau is None:
        if scheme == "be":
            tau = 0.05
        elif level is not None:
            tau = 2.0 ** (1 - level)
        else:
            return None
    n_t = int(round(tf / tau))
    if n_t < 1 or abs(n_t * tau - tf) > 1e-9 * tf:
        raise ValueError(f"tau={tau} does not divide t_f={tf}")
    return n_t
