"""Independent reference computations shared by the tests."""

import numpy as np
from scipy.integrate import quad, solve_ivp
from scipy.optimize import brentq
from scipy.linalg import expm, logm


def E(n, i, j):
    m = np.zeros((n, n))
    m[i - 1, j - 1] = 1.0
    return m


def block(*mats):
    n = sum(m.shape[0] for m in mats)
    out = np.zeros((n, n))
    o = 0
    for m in mats:
        k = m.shape[0]
        out[o:o + k, o:o + k] = m
        o += k
    return out


Z3 = np.zeros((3, 3))
# faithful matrix representations: basis element i -> REPS[name][i]
REPS = {
    "heisenberg": [E(3, 1, 2), E(3, 2, 3), E(3, 1, 3)],
    "engel_riemannian": [E(4, 2, 3) + E(4, 1, 2), E(4, 3, 4), E(4, 2, 4), E(4, 1, 4)],
    "free23": [
        block(E(3, 1, 2), E(3, 1, 2), Z3),
        block(E(3, 2, 3), Z3, E(3, 1, 2)),
        block(Z3, E(3, 2, 3), E(3, 2, 3)),
        block(E(3, 1, 3), Z3, Z3),
        block(Z3, E(3, 1, 3), Z3),
        block(Z3, Z3, E(3, 1, 3)),
    ],
}
REPS["heisenberg_riemannian"] = REPS["heisenberg"]


def to_matrix(name, p):
    return sum(c * b for c, b in zip(p, REPS[name]))


def from_matrix(name, L):
    B = REPS[name]
    A = np.array([b.ravel() for b in B]).T
    return np.linalg.lstsq(A, np.real(L).ravel(), rcond=None)[0]


def matrix_product(name, p, q):
    return from_matrix(name, logm(expm(to_matrix(name, p)) @ expm(to_matrix(name, q))))


def ode_endpoint(name, S, f):
    """Endpoint of g' = g U(t), g(0) = I, for a control function f(t) in horizontal coordinates."""
    n = REPS[name][0].shape[0]

    def rhs(t, y):
        g = y.reshape(n, n)
        return (g @ to_matrix(name, S.to_algebra(f(t)))).ravel()

    sol = solve_ivp(rhs, (0.0, 1.0), np.eye(n).ravel(), method="DOP853", rtol=1e-12, atol=1e-13)
    return from_matrix(name, logm(sol.y[:, -1].reshape(n, n)))


def sliced_ball_volume(dist, r, rho_max, z_max, nrho=2001, epsrel=1e-10):
    """Volume of {(rho, z): dist(rho, z) <= r} (rotation invariant, symmetric in z)
    by slices: each slice's rho crossings are bracketed on a grid and refined by
    brentq; the slice areas are integrated adaptively in z."""
    rho = np.linspace(0.0, rho_max, nrho)

    def area(z):
        pts = np.stack([rho, np.zeros_like(rho), np.full_like(rho, z)], axis=-1)
        f = dist(pts) - r
        inside = f <= 0
        g = lambda x: float(dist(np.array([x, 0.0, z]))) - r
        a, start = 0.0, (0.0 if inside[0] else None)
        for j in np.flatnonzero(inside[:-1] != inside[1:]):
            t = brentq(g, rho[j], rho[j + 1], xtol=1e-14)
            if start is None:
                start = t
            else:
                a += np.pi * (t * t - start * start)
                start = None
        if start is not None:
            a += np.pi * (rho[-1] ** 2 - start * start)
        return a

    return 2.0 * quad(area, 0.0, z_max, limit=400, epsabs=0.0, epsrel=epsrel)[0]
