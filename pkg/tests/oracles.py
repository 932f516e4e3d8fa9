"""Independent reference implementations used only by the tests.

The finite element oracle loops over elements and quadrature points with its
own Lagrange bases (built from numpy polynomials) and a 5-point Gauss rule,
and numbers nodes lexicographically with x1 fastest.  Matrices are dense and
act on every node (no Dirichlet elimination).
"""

import numpy as np
from numpy.polynomial import Polynomial


def lagrange_1d(nodes):
    """Lagrange polynomials and their derivatives on ``nodes``."""
    polys = []
    for i, xi in enumerate(nodes):
        p = Polynomial([1.0])
        for j, xj in enumerate(nodes):
            if j != i:
                p = p * Polynomial([-xj, 1.0]) / (xi - xj)
        polys.append(p)
    return polys, [p.deriv() for p in polys]


class FemOracle:
    def __init__(self, level, quad=5):
        self.m = 2 ** level
        self.h = 2.0 / self.m
        self.n2 = 2 * self.m + 1
        self.n1 = self.m + 1
        self.gx, self.gw = np.polynomial.legendre.leggauss(quad)
        self.b2, self.d2 = lagrange_1d([-1.0, 0.0, 1.0])
        self.b1, self.d1 = lagrange_1d([-1.0, 1.0])

    @property
    def n_q2(self):
        return self.n2 * self.n2

    @property
    def n_q1(self):
        return self.n1 * self.n1

    def elements(self):
        for ej in range(self.m):
            for ei in range(self.m):
                yield ei, ej

    def q2_nodes(self, ei, ej):
        return [(2 * ej + b) * self.n2 + 2 * ei + a
                for b in range(3) for a in range(3)]

    def q1_nodes(self, ei, ej):
        return [(ej + b) * self.n1 + ei + a for b in range(2) for a in range(2)]

    def points(self, ei, ej):
        """(x1, x2, weight, xi, eta) per quadrature point of an element."""
        h = self.h
        for xi, wx in zip(self.gx, self.gw):
            for eta, wy in zip(self.gx, self.gw):
                x1 = -1.0 + h * ei + 0.5 * h * (xi + 1.0)
                x2 = -1.0 + h * ej + 0.5 * h * (eta + 1.0)
                yield x1, x2, wx * wy * h * h / 4.0, xi, eta

    def _eval(self, basis, deriv, xi, eta):
        k = len(basis)
        val = np.array([basis[a](xi) * basis[b](eta)
                        for b in range(k) for a in range(k)])
        gx = np.array([deriv[a](xi) * basis[b](eta)
                       for b in range(k) for a in range(k)]) * 2.0 / self.h
        gy = np.array([basis[a](xi) * deriv[b](eta)
                       for b in range(k) for a in range(k)]) * 2.0 / self.h
        return val, gx, gy

    def q2(self, xi, eta):
        return self._eval(self.b2, self.d2, xi, eta)

    def q1(self, xi, eta):
        return self._eval(self.b1, self.d1, xi, eta)

    def _assemble(self, rows_of, cols_of, shape, local):
        a = np.zeros(shape)
        for ei, ej in self.elements():
            r, c = rows_of(ei, ej), cols_of(ei, ej)
            a[np.ix_(r, c)] += local(ei, ej)
        return a

    def _q2q2(self, integrand):
        def local(ei, ej):
            out = np.zeros((9, 9))
            for x1, x2, w, xi, eta in self.points(ei, ej):
                out += w * integrand(x1, x2, *self.q2(xi, eta))
            return out
        return self._assemble(self.q2_nodes, self.q2_nodes,
                              (self.n_q2, self.n_q2), local)

    def mass(self):
        return self._q2q2(lambda x1, x2, v, gx, gy: np.outer(v, v))

    def stiffness(self):
        return self._q2q2(lambda x1, x2, v, gx, gy:
                          np.outer(gx, gx) + np.outer(gy, gy))

    def wind_at(self, wind, x1, x2):
        return np.asarray(wind(x1, x2), dtype=float)

    def convection(self, wind):
        """(wind . grad phi_j, phi_i) for an analytic wind."""
        def integrand(x1, x2, v, gx, gy):
            w1, w2 = self.wind_at(wind, x1, x2)
            return np.outer(v, w1 * gx + w2 * gy)
        return self._q2q2(integrand)

    def divergence(self):
        """Rows: Q1 nodes.  Columns: [x-component; y-component] Q2 nodes."""
        b = np.zeros((self.n_q1, 2 * self.n_q2))
        for ei, ej in self.elements():
            r = self.q1_nodes(ei, ej)
            c = self.q2_nodes(ei, ej)
            bx = np.zeros((4, 9))
            by = np.zeros((4, 9))
            for x1, x2, w, xi, eta in self.points(ei, ej):
                p, _, _ = self.q1(xi, eta)
                _, gx, gy = self.q2(xi, eta)
                bx -= w * np.outer(p, gx)
                by -= w * np.outer(p, gy)
            b[np.ix_(r, c)] += bx
            b[np.ix_(r, [k + self.n_q2 for k in c])] += by
        return b

    def _q1q1(self, integrand):
        def local(ei, ej):
            out = np.zeros((4, 4))
            for x1, x2, w, xi, eta in self.points(ei, ej):
                out += w * integrand(x1, x2, *self.q1(xi, eta))
            return out
        return self._assemble(self.q1_nodes, self.q1_nodes,
                              (self.n_q1, self.n_q1), local)

    def pressure_mass(self):
        return self._q1q1(lambda x1, x2, v, gx, gy: np.outer(v, v))

    def pressure_stiffness(self):
        return self._q1q1(lambda x1, x2, v, gx, gy:
                          np.outer(gx, gx) + np.outer(gy, gy))

    def pressure_convection(self, wind):
        def integrand(x1, x2, v, gx, gy):
            w1, w2 = self.wind_at(wind, x1, x2)
            return np.outer(v, w1 * gx + w2 * gy)
        return self._q1q1(integrand)

    def load(self, field):
        """Full vector [(f1, phi_i); (f2, phi_i)]."""
        out = np.zeros((2, self.n_q2))
        for ei, ej in self.elements():
            idx = self.q2_nodes(ei, ej)
            for x1, x2, w, xi, eta in self.points(ei, ej):
                v, _, _ = self.q2(xi, eta)
                f = np.asarray(field(x1, x2), dtype=float)
                out[0, idx] += w * f[0] * v
                out[1, idx] += w * f[1] * v
        return out.reshape(-1)

    def lps(self, wind, delta_of_patch, space="q2"):
        """delta_P * int_P kappa(w.grad phi_i) kappa(w.grad phi_j) per patch.

        kappa is the fluctuation about the patch mean of the streamline
        derivative, so each patch contributes int g_i g_j - (int g_i)(int g_j)/|P|.
        """
        n = self.n_q2 if space == "q2" else self.n_q1
        nodes = self.q2_nodes if space == "q2" else self.q1_nodes
        evalf = self.q2 if space == "q2" else self.q1
        a = np.zeros((n, n))
        area = (2.0 * self.h) ** 2
        for pj in range(self.m // 2):
            for pi in range(self.m // 2):
                delta = delta_of_patch(pi, pj)
                if delta == 0.0:
                    continue
                gram = np.zeros((n, n))
                mean = np.zeros(n)
                for ej in (2 * pj, 2 * pj + 1):
                    for ei in (2 * pi, 2 * pi + 1):
                        idx = nodes(ei, ej)
                        for x1, x2, w, xi, eta in self.points(ei, ej):
                            _, gx, gy = evalf(xi, eta)
                            w1, w2 = self.wind_at(wind, x1, x2)
                            g = np.zeros(n)
                            np.add.at(g, idx, w1 * gx + w2 * gy)
                            gram += w * np.outer(g, g)
                            mean += w * g
                a += delta * (gram - np.outer(mean, mean) / area)
        return a

    def patch_delta(self, wind, nu, delta0, smooth):
        """Patch parameter from the max nodal wind speed over the patch."""
        h = self.h
        xs = np.linspace(-1.0, 1.0, self.n2)

        def delta(pi, pj):
            sl = slice(4 * pi, 4 * pi + 5), slice(4 * pj, 4 * pj + 5)
            x1, x2 = np.meshgrid(xs[sl[0]], xs[sl[1]])
            w1, w2 = self.wind_at(wind, x1, x2)
            wmax = np.max(np.hypot(w1, w2))
            pe = wmax * h / (2.0 * nu)
            if pe <= 1.0:
                return 0.0
            d = delta0 * h / (2.0 * wmax)
            return d * (1.0 - 1.0 / pe) if smooth else d
        return delta

    def interpolate(self, field):
        xs = np.linspace(-1.0, 1.0, self.n2)
        x1, x2 = np.meshgrid(xs, xs)
        vals = np.asarray(field(x1.ravel(), x2.ravel()), dtype=float)
        return vals.reshape(-1)


def dense_gmres_history(a, b, steps):
    """Relative residuals of full unrestarted GMRES from zero.

    Builds an orthonormal Krylov basis by Gram-Schmidt and solves each
    least-squares problem with ``lstsq`` (no Givens rotations).
    """
    n = b.size
    q = np.zeros((n, steps + 1))
    hess = np.zeros((steps + 1, steps))
    beta = np.linalg.norm(b)
    q[:, 0] = b / beta
    hist = [1.0]
    for k in range(steps):
        w = a @ q[:, k]
        for i in range(k + 1):
            hess[i, k] = q[:, i] @ w
            w = w - hess[i, k] * q[:, i]
        for i in range(k + 1):
            c = q[:, i] @ w
            hess[i, k] += c
            w = w - c * q[:, i]
        hess[k + 1, k] = np.linalg.norm(w)
        rhs = np.zeros(k + 2)
        rhs[0] = beta
        y = np.linalg.lstsq(hess[:k + 2, :k + 1], rhs, rcond=None)[0]
        res = np.linalg.norm(b - a @ (q[:, :k + 1] @ y))
        hist.append(res / beta)
        if hess[k + 1, k] < 1e-14 * beta:
            break
        q[:, k + 1] = w / hess[k + 1, k]
    return np.array(hist)


def dense(apply, n):
    """Materialize a linear map given by ``apply`` on vectors of length n."""
    return np.column_stack([apply(e) for e in np.eye(n)])
