"""Normal geodesics of 2-step structures and exact Heisenberg distances.

Normal geodesics are written in rho-orthonormal coordinates of V: the V part
of the control is u_V(t) = exp(tM) h0 with M skew, so

    x(t) = int_0^t exp(sM) h0 ds = c - exp(tM) c + t b,   h0 = b - M c,

with b in ker M and c in range M. The drift (component in the horizontal
part of [g,g]) is the constant vector zeta.

For the Heisenberg group every distance reduces to a one-dimensional monotone
root-finding problem in the arc angle, see ``heisenberg_sr_distance`` and
``heisenberg_riemannian_distance``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.polynomial import legendre

from .algebra import bracket
from .controls import SampledControl

TWO_PI = 2.0 * np.pi
SERIES_K = 1e-4
NEAR_AXIS = 1e-17  # relative distance to the vertical axis treated as on it


@dataclass(frozen=True, eq=False)
class NormalGeodesicParams:
    """M skew on V, b in ker M, c in range M (V coordinates), zeta in drift coordinates."""

    M: np.ndarray
    b: np.ndarray
    c: np.ndarray
    zeta: np.ndarray

    def __post_init__(self):
        M = np.atleast_2d(np.array(self.M, dtype=float))
        if M.shape[0] != M.shape[1]:
            raise ValueError("M must be square")
        M = 0.5 * (M - M.T)
        b = np.array(self.b, dtype=float).reshape(-1)
        c = np.array(self.c, dtype=float).reshape(-1)
        zeta = np.array(self.zeta, dtype=float).reshape(-1)
        scale = max(1.0, float(np.abs(M).max()) if M.size else 1.0)
        if b.shape != (M.shape[0],) or c.shape != (M.shape[0],):
            raise ValueError("b and c must live in V")
        if np.abs(M @ b).max(initial=0.0) > 1e-10 * scale * max(1.0, np.abs(b).max(initial=0.0)):
            raise ValueError("b must lie in the kernel of M")
        if M.size:
            u, s, vt = np.linalg.svd(M)
            ker = vt[np.sum(s > 1e-10 * scale):]
            if np.abs(ker @ c).max(initial=0.0) > 1e-10 * max(1.0, np.abs(c).max(initial=0.0)):
                raise ValueError("c must lie in the range of M")
        for name, a in (("M", M), ("b", b), ("c", c), ("zeta", zeta)):
            a.setflags(write=False)
            object.__setattr__(self, name, a)

    @property
    def h0(self):
        return self.b - self.M @ self.c

    def energy(self):
        return float(self.h0 @ self.h0 + self.zeta @ self.zeta)

    def to_json(self):
        return {"M": self.M.tolist(), "b": self.b.tolist(), "c": self.c.tolist(), "zeta": self.zeta.tolist()}


def covector_matrices(S):
    """Linear maps lam -> M(lam) (shape (m, v, v)) and lam -> zeta(lam) (shape (m, w))
    for a covector lam on [g,g], in rho-orthonormal V and drift coordinates."""
    alg = S.algebra
    der = list(alg.derived_indices)
    Va = S.V_alg
    br = np.einsum("ai,bj,ijk->abk", Va.T, Va.T, alg.brackets)[..., der]  # [V_a, V_b]
    # M_ij = lam([V_j, V_i])
    Mmap = np.transpose(br, (2, 1, 0))
    Zmap = S.drift_alg[der, :]
    return Mmap, Zmap


def params_from_covector(S, lam, h0):
    """Normal geodesic with central covector lam and initial V velocity h0."""
    Mmap, Zmap = covector_matrices(S)
    lam = np.asarray(lam, dtype=float)
    M = np.einsum("l,lij->ij", lam, Mmap)
    zeta = lam @ Zmap
    h0 = np.asarray(h0, dtype=float)
    u, s, vt = np.linalg.svd(M) if M.size else (None, np.zeros(0), np.zeros((0, 0)))
    scale = max(1.0, float(np.abs(M).max(initial=0.0)))
    r = int(np.sum(s > 1e-10 * scale))
    ker = vt[r:]
    b = ker.T @ (ker @ h0) if ker.size else np.zeros_like(h0)
    c = -np.linalg.pinv(M, rcond=1e-10) @ (h0 - b) if r else np.zeros_like(h0)
    c = c - (ker.T @ (ker @ c) if ker.size else 0.0)
    return NormalGeodesicParams(M, b, c, zeta)


def _phi1(z):
    """(exp(z) - 1) / z for complex z, with a series near zero."""
    z = np.asarray(z, dtype=complex)
    out = np.empty_like(z)
    small = np.abs(z) < 1e-3
    zs = z[small]
    out[small] = 1 + zs / 2 + zs**2 / 6 + zs**3 / 24 + zs**4 / 120
    zb = z[~small]
    out[~small] = np.expm1(zb) / zb
    return out


def _flow(M, h0, t):
    """x(t) = t phi1(tM) h0 and xdot(t) = exp(tM) h0 for an array of times."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    if M.size == 0:
        return np.zeros((len(t), 0)), np.zeros((len(t), 0))
    # iM is Hermitian: M = Q diag(-i w) Q^H
    w, Q = np.linalg.eigh(1j * M)
    coef = Q.conj().T @ h0
    lam = -1j * w
    x = np.real((t[:, None] * _phi1(np.outer(t, lam)) * coef[None, :]) @ Q.T)
    xd = np.real((np.exp(np.outer(t, lam)) * coef[None, :]) @ Q.T)
    return x, xd


def _gauss_panels(t, rate, per_panel=48):
    panels = max(1, int(np.ceil(abs(rate) * t / 12.0)))
    x, w = legendre.leggauss(per_panel)
    edges = np.linspace(0.0, t, panels + 1)
    nodes = (0.5 * (edges[:-1, None] + edges[1:, None]) + 0.5 * np.diff(edges)[:, None] * x[None, :]).ravel()
    weights = (0.5 * np.diff(edges)[:, None] * w[None, :]).ravel()
    return nodes, weights


def normal_geodesic_point(S, params, t=1.0):
    """Point x(t) + 1/2 int_0^t [x, xdot] ds + t zeta of the normal geodesic."""
    if S.step != 2:
        raise ValueError("normal geodesics are implemented for step 2")
    t = float(t)
    M, h0 = params.M, params.h0
    rate = float(np.abs(np.linalg.eigvalsh(1j * M)).max(initial=0.0))
    x_end, _ = _flow(M, h0, [t])
    end = x_end[0] @ S.V_alg.T
    if t > 0:
        s, w = _gauss_panels(t, rate)
        x, xd = _flow(M, h0, s)
        br = bracket(S.algebra, x @ S.V_alg.T, xd @ S.V_alg.T)
        end = end + 0.5 * (w @ br)
    return end + t * (S.drift_alg @ params.zeta)


def normal_geodesic_control(S, params, N=2049):
    """The control of the geodesic, sampled in horizontal coordinates."""
    t = np.linspace(0.0, 1.0, N)
    _, xd = _flow(params.M, params.h0, t)
    vals = xd @ S.V_basis.T + (S.drift_basis @ params.zeta)[None, :]
    return SampledControl(vals)


# ---------------------------------------------------------------------------
# Heisenberg group, [X, Y] = Z


def _one_minus_sinc_term(phi):
    """phi - sin(phi), with a series for small phi."""
    phi = np.asarray(phi, dtype=float)
    small = phi < 1e-2
    p2 = phi * phi
    series = phi * p2 / 6.0 * (1 - p2 / 20.0 * (1 - p2 / 42.0 * (1 - p2 / 72.0)))
    return np.where(small, series, phi - np.sin(phi))


class _Angle:
    """An angle in (0, 2 pi) stored together with its complement 2 pi - angle,
    so that quantities near either end keep full relative precision."""

    def __init__(self, var, upper):
        self.upper = upper
        self.phi = np.where(upper, TWO_PI - var, var)
        self.eps = np.where(upper, var, TWO_PI - var)
        self.half_sin = np.where(upper, np.sin(0.5 * self.eps), np.sin(0.5 * self.phi))
        lower_part = _one_minus_sinc_term(np.where(upper, 1.0, var))
        self.phi_minus_sin = np.where(upper, self.phi + np.sin(self.eps), lower_part)

    def mu(self):
        """(phi - sin phi) / (8 sin^2(phi/2)): area factor of an arc with unit chord."""
        small = ~self.upper & (self.phi < 1e-4)
        with np.errstate(divide="ignore", invalid="ignore"):
            full = self.phi_minus_sin / (8.0 * self.half_sin**2)
        return np.where(small, self.phi / 12.0 * (1.0 + self.phi**2 / 30.0), full)

    def stretch(self):
        """phi / (2 sin(phi/2)): arc length over chord length."""
        return self.phi / (2.0 * self.half_sin)


def _solve_angle(g, target, iters=80):
    """Solve g(angle) = target for increasing g on (0, 2 pi), elementwise.

    The lower half is searched in the angle itself and the upper half in its
    complement, both by bisection in log scale so that angles very close to
    0 or 2 pi keep full relative precision."""
    target = np.asarray(target, dtype=float)
    mid = g(_Angle(np.full(target.shape, np.pi), np.zeros(target.shape, bool)))
    upper = target > mid
    lo = np.full(target.shape, np.log(1e-300))
    hi = np.full(target.shape, np.log(np.pi))
    for _ in range(iters):
        m = 0.5 * (lo + hi)
        val = g(_Angle(np.exp(m), upper))
        # on the upper branch g decreases in the complement variable
        go_right = np.where(upper, val > target, val < target)
        lo = np.where(go_right, m, lo)
        hi = np.where(go_right, hi, m)
    return _Angle(np.exp(0.5 * (lo + hi)), upper)


def heisenberg_sr_distance(p, s=1.0):
    """Exact sub-Riemannian distance from the identity in the Heisenberg group
    with orthonormal X, Y and [X, Y] = s Z. Accepts one point or an (n, 3) array."""
    p = np.asarray(p, dtype=float)
    single = p.ndim == 1
    p = np.atleast_2d(p)
    rho = np.hypot(p[:, 0], p[:, 1])
    z = np.abs(p[:, 2]) / s
    out = rho.copy()
    axis = 2.0 * np.sqrt(np.pi * z)
    # within NEAR_AXIS of the axis the vertical value is exact to rounding
    vert = (rho <= NEAR_AXIS * axis) & (z > 0)
    out[vert] = axis[vert]
    gen = ~vert & (rho > 0) & (z > 0)
    if np.any(gen):
        ang = _solve_angle(lambda a: a.mu(), z[gen] / rho[gen] ** 2)
        out[gen] = rho[gen] * ang.stretch()
    return out[0] if single else out


@dataclass(frozen=True)
class HeisenbergGeodesicParams:
    k: float
    theta: float
    t: float

    def __post_init__(self):
        if not self.k > 0:
            raise ValueError("curvature k must be positive")
        if not 0 <= self.theta < np.pi:
            raise ValueError("theta must lie in [0, pi)")
        if not 0 < self.t < TWO_PI / self.k:
            raise ValueError("duration must lie in (0, 2 pi / k)")

    @property
    def speed(self):
        return float(np.hypot(1.0, self.k))


def heisenberg_riemannian_curve(k, theta, t):
    """Point at time t on the Riemannian Heisenberg geodesic with curvature k,
    initial direction angle theta and vertical velocity k (orthonormal X, Y, Z)."""
    t = np.asarray(t, dtype=float)
    a = k * t
    if k < SERIES_K:
        # (cos a - 1)/k, sin(a)/k and (a - sin a)/(2 k^2) by Taylor series in a
        a2 = a * a
        cm1 = -t * a / 2.0 * (1 - a2 / 12.0 * (1 - a2 / 30.0 * (1 - a2 / 56.0)))
        sn = t * (1 - a2 / 6.0 * (1 - a2 / 20.0 * (1 - a2 / 42.0)))
        area = t * t * a / 12.0 * (1 - a2 / 20.0 * (1 - a2 / 42.0 * (1 - a2 / 72.0)))
    else:
        cm1 = (np.cos(a) - 1.0) / k
        sn = np.sin(a) / k
        area = (a - np.sin(a)) / (2.0 * k * k)
    x = np.cos(theta) * cm1 - np.sin(theta) * sn
    y = np.sin(theta) * cm1 + np.cos(theta) * sn
    z = area + a
    return np.stack([x, y, z], axis=-1)


def heisenberg_riemannian_endpoint(params):
    return heisenberg_riemannian_curve(params.k, params.theta, params.t)


def heisenberg_profile(r, alpha):
    """Point (x, 0, z), x, z > 0, at Riemannian distance r reached with arc angle alpha."""
    alpha = np.asarray(alpha, dtype=float)
    if np.any(alpha <= 0) or np.any(alpha >= min(TWO_PI, r)):
        raise ValueError("alpha must lie in (0, min(2 pi, r))")
    t2 = r * r - alpha * alpha
    x = np.sqrt(t2) * np.sqrt(2.0 - 2.0 * np.cos(alpha)) / alpha
    z = t2 * _one_minus_sinc_term(alpha) / (2.0 * alpha * alpha) + alpha
    return np.stack([x, np.zeros_like(x), z], axis=-1)


def heisenberg_riemannian_distance(p, kappa=1.0, s=1.0):
    """Exact Riemannian distance from the identity in the Heisenberg group with
    orthonormal X, Y, the vertical generator of rho-norm kappa and [X, Y] = s Z.

    Along the minimizing family the vertical coordinate satisfies
    rho^2 mu(alpha) + alpha = |z| with alpha the arc angle in (0, 2 pi); the
    distance is then sqrt(T^2 + alpha^2) with T = rho alpha / (2 sin(alpha/2))."""
    p = np.asarray(p, dtype=float)
    single = p.ndim == 1
    p = np.atleast_2d(p)
    # pass to the generator sZ and rescale its norm to 1:
    # d_kappa(p) = d_1(delta_kappa p) / kappa
    kappa = kappa * s
    rho = np.hypot(p[:, 0], p[:, 1]) * kappa
    z = np.abs(p[:, 2]) / s * kappa * kappa
    out = rho.copy()
    axis = np.where(z <= TWO_PI, z, np.sqrt(np.maximum(4.0 * np.pi * z - 4.0 * np.pi**2, 0.0)))
    vert = (rho <= NEAR_AXIS * axis) & (z > 0)
    out[vert] = axis[vert]
    gen = ~vert & (rho > 0) & (z > 0)
    if np.any(gen):
        r2 = rho[gen] ** 2
        ang = _solve_angle(lambda a: r2 * a.mu() + a.phi, z[gen])
        T = rho[gen] * ang.stretch()
        out[gen] = np.hypot(T, ang.phi)
    out = out / kappa
    return out[0] if single else out


def heisenberg_geodesic_params(p):
    """Riemannian Heisenberg geodesic (k, theta, t) reaching p with p_z > 0 and
    nonzero planar part. theta comes out in [0, 2 pi); for theta >= pi the curve
    is the one with theta - pi rotated by pi about the vertical axis."""
    p = np.asarray(p, dtype=float)
    rho = np.hypot(p[0], p[1])
    ang = _solve_angle(lambda a: rho * rho * a.mu() + a.phi, np.array([p[2]]))
    alpha = float(ang.phi[0])
    t = float(rho * ang.stretch()[0])
    k = alpha / t
    # planar endpoint direction is theta + pi/2 + alpha/2
    theta = (np.arctan2(p[1], p[0]) - 0.5 * np.pi - 0.5 * alpha) % TWO_PI
    return k, theta, t


# ---------------------------------------------------------------------------
# reduction of one-dimensional-centre structures to the Heisenberg group


@dataclass(frozen=True, eq=False)
class HeisenbergReduction:
    """Isometric splitting of a structure with dim [g,g] = 1 and a rank-2
    bracket on V into a Heisenberg factor and a Euclidean factor."""

    f1: np.ndarray
    f2: np.ndarray
    kernel: np.ndarray
    s: float
    kappa: float | None

    def distance(self, S, points):
        a, z = S.split_point(np.atleast_2d(points))
        x = a @ self.f1
        y = a @ self.f2
        rest = a @ self.kernel
        zz = z[:, 0]
        planar = np.stack([x, y, zz], axis=-1)
        if self.kappa is None:
            dh = heisenberg_sr_distance(planar, s=self.s)
        else:
            dh = heisenberg_riemannian_distance(planar, kappa=self.kappa, s=self.s)
        return np.sqrt(dh * dh + np.sum(rest * rest, axis=-1))


def heisenberg_reduction(S):
    """Return a HeisenbergReduction when S splits as (Heisenberg) x (Euclidean), else None."""
    if S.step != 2 or S.algebra.m != 1:
        return None
    alg = S.algebra
    der = alg.derived_indices[0]
    Va = S.V_alg
    B = np.einsum("ia,jb,ij->ab", Va, Va, alg.brackets[:, :, der])
    evals, evecs = np.linalg.eigh(B @ B.T)
    scale = max(evals.max(initial=0.0), 1e-300)
    rank = int(np.sum(evals > 1e-10 * scale))
    if rank != 2:
        return None
    f1 = evecs[:, -1]
    s = float(np.sqrt(evals[-1]))
    f2 = B.T @ f1 / s
    kernel = evecs[:, : len(evals) - 2]
    if S.drift_basis.shape[1] == 0:
        kappa = None
    else:
        # rho-norm of the central basis vector: drift_alg = e_z / kappa up to sign
        kappa = 1.0 / abs(float(S.drift_alg[der, 0]))
    return HeisenbergReduction(f1, f2, kernel, s, kappa)


def exact_distance(S, points):
    """Exact distances from the identity when S admits a Heisenberg reduction, else None."""
    red = heisenberg_reduction(S)
    if red is None:
        return None
    p = np.asarray(points, dtype=float)
    out = red.distance(S, p)
    return float(out[0]) if p.ndim == 1 else out
