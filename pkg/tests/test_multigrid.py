import numpy as np
import pytest
import scipy.sparse as sp

from nscontrol.fem import Discretization, LpsConfig
from nscontrol.multigrid import (PinnedPressureSolver, build_hierarchy,
                                 mg_vcycle, mg_vcycle_reference)

_D = {}


def disc(level):
    if level not in _D:
        _D[level] = Discretization(level)
    return _D[level]


def prolongations(level, space="q2"):
    name = "prolongation_q2" if space == "q2" else "prolongation_q1"
    return [getattr(disc(k), name)() for k in range(level, 1, -1)]


def contraction(a, h, cycles=6, seed=0):
    """Mean per-cycle error reduction from a random exact solution."""
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(a.shape[0])
    b = a @ x
    e0 = np.linalg.norm(x)
    e = np.linalg.norm(mg_vcycle(h, b, cycles) - x)
    return (e / e0) ** (1.0 / cycles)


def test_compiled_matches_reference():
    d = disc(4)
    a = d.stiffness + 10.0 * d.mass
    h = build_hierarchy(a, prolongations(4), cycles=3)
    r = np.random.default_rng(1).standard_normal((a.shape[0], 2))
    np.testing.assert_allclose(mg_vcycle(h, r), mg_vcycle_reference(h, r),
                               rtol=0, atol=1e-13 * np.abs(r).max())


def test_poisson_contraction_level_independent():
    factors = []
    for level in (2, 3, 4, 5):
        a = disc(level).stiffness
        factors.append(contraction(a, build_hierarchy(a, prolongations(level))))
    assert max(factors) < 0.3
    assert max(factors) / max(min(factors), 1e-3) < 30


def test_convection_dominated_with_lps():
    d = disc(4)
    nu = 1.0 / 500
    w = d.interpolate(lambda x1, x2, t: np.stack([x2 * (1 - x1 * x1),
                                                  -x1 * (1 - x2 * x2)]))
    ops = d.wind_operators(w, nu, LpsConfig())
    a = (nu * d.stiffness + ops.conv + ops.lps).tocsr()
    f = contraction(a, build_hierarchy(a, prolongations(4)))
    assert f < 1.0


def test_single_level_is_direct():
    a = disc(2).stiffness
    h = build_hierarchy(a, [])
    r = np.arange(a.shape[0], dtype=float)
    np.testing.assert_allclose(a @ mg_vcycle(h, r), r, atol=1e-10)


def test_mismatched_prolongation():
    with pytest.raises(ValueError):
        build_hierarchy(disc(3).stiffness, prolongations(2))


def test_singular_coarse_rejected():
    a = disc(3).pressure_stiffness
    with pytest.raises(np.linalg.LinAlgError):
        build_hierarchy(a, prolongations(3, "q1"))


def test_pinned_pressure_solver():
    d = disc(2)
    kp = d.pressure_stiffness
    s = PinnedPressureSolver(kp, prolongations(2, "q1"), cycles=30)
    rng = np.random.default_rng(3)
    r = rng.standard_normal(kp.shape[0])
    r -= r.mean()
    k = kp.toarray()
    ref = np.zeros_like(r)
    ref[1:] = np.linalg.solve(k[1:, 1:], r[1:])
    ref -= ref.mean()
    got = s(r)
    assert abs(got.mean()) <= 1e-14
    np.testing.assert_allclose(got, ref, atol=1e-6)


def test_pinned_pressure_recovers_mean_zero():
    d = disc(4)
    kp = d.pressure_stiffness
    s = PinnedPressureSolver(kp, prolongations(4, "q1"), cycles=2)
    x = np.random.default_rng(4).standard_normal(kp.shape[0])
    x -= x.mean()
    err = np.linalg.norm(s(kp @ x) - x) / np.linalg.norm(x)
    assert err < 0.2
    print(f"two-cycle pinned pressure relative error: {err:.3e}")
