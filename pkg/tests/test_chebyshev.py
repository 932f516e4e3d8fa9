import numpy as np
import pytest

from nscontrol.chebyshev import (ChebParams, MassSolver, chebyshev_mass_apply,
                                 element_bounds, estimate_mass_bounds,
                                 gershgorin_bounds)
from nscontrol.fem import Discretization


@pytest.fixture(scope="module")
def d2():
    return Discretization(2)


def _scaled_eigs(m):
    m = m.toarray()
    s = 1.0 / np.sqrt(np.diag(m))
    return np.linalg.eigvalsh(m * s[:, None] * s[None, :])


def test_velocity_mass_accuracy(d2):
    m = d2.mass
    params = estimate_mass_bounds(m, 20, element=d2.mass_element)
    rng = np.random.default_rng(0)
    for _ in range(5):
        r = rng.standard_normal(m.shape[0])
        x = chebyshev_mass_apply(m, r, params)
        ref = np.linalg.solve(m.toarray(), r)
        assert np.linalg.norm(x - ref) / np.linalg.norm(ref) < 1e-6


def test_pressure_mass_gershgorin_enclosure(d2):
    lo, hi = gershgorin_bounds(d2.pressure_mass)
    ev = _scaled_eigs(d2.pressure_mass)
    assert lo - 1e-12 <= ev.min() and ev.max() <= hi + 1e-12


@pytest.mark.parametrize("which", ["mass", "pressure_mass"])
def test_element_bounds_enclose(d2, which):
    m = getattr(d2, which)
    local = d2.mass_element if which == "mass" else d2.pressure_mass_element
    lo, hi = element_bounds(local)
    ev = _scaled_eigs(m)
    assert lo - 1e-12 <= ev.min() and ev.max() <= hi + 1e-12
    p = estimate_mass_bounds(m, element=local)
    assert p.lmin <= ev.min() + 1e-12 and ev.max() <= p.lmax + 1e-12


def test_error_decreases_with_steps(d2):
    m = d2.mass
    rng = np.random.default_rng(1)
    r = rng.standard_normal(m.shape[0])
    ref = np.linalg.solve(m.toarray(), r)
    errs = []
    for steps in (5, 10, 20):
        p = estimate_mass_bounds(m, steps, element=d2.mass_element)
        errs.append(np.linalg.norm(MassSolver(m, p)(r) - ref))
    assert errs[0] > errs[1] > errs[2]


def test_block_rhs(d2):
    m = d2.pressure_mass
    p = estimate_mass_bounds(m, element=d2.pressure_mass_element)
    r = np.random.default_rng(2).standard_normal((m.shape[0], 3))
    s = MassSolver(m, p)
    np.testing.assert_allclose(s(r)[:, 1], s(r[:, 1]), atol=1e-15)


def test_params_validation():
    with pytest.raises(ValueError):
        ChebParams(0.0, 1.0)
    with pytest.raises(ValueError):
        ChebParams(2.0, 1.0)
    with pytest.raises(ValueError):
        ChebParams(0.5, 1.0, steps=0)
