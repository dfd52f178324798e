"""Vertical perturbations of a control.

Given a control u and a vertical vector zeta, build v with values in V such
that the endpoint of u + v is the endpoint of u shifted by zeta, v is
L2-orthogonal to u, and energy(v) <= 4 pi K N |zeta| with N = m^2 + 2m.

zeta is written as sum_k alpha_k [x_k, y_k] with alpha_k >= 0 over a basis of
simple brackets of rho-orthonormal pairs; |.| on [g,g] is the Euclidean norm
of the coordinates in that basis, so K = sqrt(m). Block k uses the frequencies
E_k = {(m+2)(k-1)+1, ..., (m+2)k} and v_k = sum_n Re(z_n (y_k + i x_k) f_n),
f_n(t) = exp(2 pi i n t), whose endpoint is sum_n |z_n|^2 / (4 pi n) [x_k, y_k].
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .algebra import RANK_TOL, _rank, bracket
from .controls import (
    SampledControl,
    cumulative_simpson,
    endpoint_step2,
    energy,
    l2_inner,
    resample,
    simpson_weights,
)

ENDPOINT_TOL = 1e-6
ORTHOGONALITY_TOL = 1e-8


class SolverDegenerate(RuntimeError):
    """The moment system has a numerically trivial null space."""


@dataclass(frozen=True, eq=False)
class BracketDecomposition:
    """zeta = sum_k alpha_k [x_k, y_k]; pairs in horizontal coordinates."""

    pairs: tuple
    alphas: np.ndarray
    K: float
    coords: np.ndarray

    @property
    def norm(self):
        """|zeta|: Euclidean norm of the coordinates in the simple-bracket basis."""
        return float(np.linalg.norm(self.coords))


def derived_pair_basis(S):
    """Pairs (x_k, y_k) of rho-orthonormal V vectors (horizontal coordinates)
    whose brackets form a basis of [g,g]; greedy over V basis pairs."""
    if S.step != 2:
        raise ValueError("perturbations are implemented for step 2")
    alg = S.algebra
    der = list(alg.derived_indices)
    Vb = S.V_basis
    Va = S.V_alg
    pairs = []
    rows = []
    v = Vb.shape[1]
    for i in range(v):
        for j in range(i + 1, v):
            b = bracket(alg, Va[:, i], Va[:, j])[der]
            if np.abs(b).max() <= RANK_TOL:
                continue
            if _rank(np.array(rows + [b])) > len(rows):
                rows.append(b)
                pairs.append((Vb[:, i].copy(), Vb[:, j].copy()))
            if len(rows) == alg.m:
                return tuple(pairs)
    raise ValueError("[V,V] does not span [g,g]: V does not bracket-generate the derived algebra")


def _derived_coords(S, zeta):
    alg = S.algebra
    zeta = np.asarray(zeta, dtype=float)
    if zeta.shape == (alg.m,):
        return zeta
    if zeta.shape != (alg.dim,):
        raise ValueError(f"zeta must have length {alg.dim} or {alg.m}")
    off = zeta[list(alg.abelian_indices)]
    if np.abs(off).max(initial=0.0) > 1e-12 * max(1.0, np.abs(zeta).max()):
        raise ValueError("zeta must lie in [g,g]")
    return zeta[list(alg.derived_indices)]


def bracket_basis_matrix(S, pairs):
    """Columns [x_k, y_k] in derived coordinates."""
    alg = S.algebra
    der = list(alg.derived_indices)
    return np.array([bracket(alg, S.to_algebra(x), S.to_algebra(y))[der] for x, y in pairs]).T


def decompose_bracket(S, zeta, pairs=None):
    if pairs is None:
        pairs = derived_pair_basis(S)
    z = _derived_coords(S, zeta)
    B = bracket_basis_matrix(S, pairs)
    beta = np.linalg.solve(B, z)
    out = []
    for (x, y), b in zip(pairs, beta):
        out.append((y, x) if b < 0 else (x, y))
    return BracketDecomposition(tuple(out), np.abs(beta), float(np.sqrt(len(pairs))), beta)


def frequency_block(k, m):
    """E_k for k = 1, ..., m."""
    return np.arange((m + 2) * (k - 1) + 1, (m + 2) * k + 1)


def _fourier(n, t):
    return np.exp(2j * np.pi * np.outer(t, n))


@dataclass(frozen=True, eq=False)
class PerturbationResult:
    v: SampledControl
    pairs: tuple
    alphas: np.ndarray
    blocks: tuple
    coefficients: tuple
    K: float
    N: int
    zeta_norm: float
    certificate: dict = field(default_factory=dict)

    @property
    def C(self):
        return 4.0 * np.pi * self.K * self.N

    @property
    def bound(self):
        return self.C * self.zeta_norm

    def block_control(self, k, grid):
        """v_k sampled on a grid of size ``grid`` (k counts from 0)."""
        t = np.linspace(0.0, 1.0, grid)
        x, y = self.pairs[k]
        xi = y + 1j * x
        z = self.coefficients[k]
        vals = np.real((_fourier(self.blocks[k], t) @ z)[:, None] * xi[None, :])
        return SampledControl(vals)

    def evaluate(self, grid):
        vals = np.zeros((grid, len(self.v.values[0])))
        for k in range(len(self.pairs)):
            if self.alphas[k] > 0:
                vals = vals + self.block_control(k, grid).values
        return SampledControl(vals)

    def exact_energy(self):
        return float(sum(np.sum(np.abs(z) ** 2) for z in self.coefficients))

    def to_json(self):
        return {
            "K": self.K,
            "N": self.N,
            "C": self.C,
            "zeta_norm": self.zeta_norm,
            "bound": self.bound,
            "alphas": self.alphas.tolist(),
            "blocks": [b.tolist() for b in self.blocks],
            "coefficients": [[[float(c.real), float(c.imag)] for c in z] for z in self.coefficients],
            "nullspace_choice": "SVD null space; least-energy unit null vector, phase-fixed, scaled by a positive real",
            "certificate": self.certificate,
        }


def _moments(S, u, xi, freqs):
    """P^n = int f_n rho(xi, u) and Q^n = int f_n [int_0^t u, xi] (derived coords)."""
    alg = S.algebra
    der = list(alg.derived_indices)
    t = u.grid
    w = simpson_weights(u.N, u.h)
    fn = _fourier(freqs, t)  # (N, n)
    rho_xi_u = u.values @ S.metric @ xi  # complex (N,)
    P = (w * rho_xi_u) @ fn
    U = cumulative_simpson(u.values @ S.horizontal.T, u.h)
    br = bracket(alg, U.astype(complex), S.to_algebra(xi)[None, :])[:, der]  # (N, m)
    Q = np.einsum("t,tn,tk->kn", w, fn, br)
    return P, Q


def _null_vector(A, freqs):
    """Null vector of A (from the SVD) with the least energy per unit endpoint
    weight; unique up to phase when the null space is one-dimensional."""
    _, s, vh = np.linalg.svd(A)
    scale = max(1.0, float(np.abs(A).max()))
    s_full = np.zeros(vh.shape[0])
    s_full[: len(s)] = s
    null = vh[s_full <= 1e-12 * scale].conj().T
    if null.shape[1] == 0:
        return None
    d = 1.0 / (4.0 * np.pi * freqs)
    _, vecs = np.linalg.eigh(null.conj().T @ (d[:, None] * null))
    z = null @ vecs[:, -1]
    if np.abs(A @ z).max() > 1e-8 * scale:
        return None
    # fix the phase: largest entry real positive
    j = int(np.argmax(np.abs(z)))
    return z * (abs(z[j]) / z[j])


def build_perturbation(S, u, zeta, pairs=None):
    if S.step != 2:
        raise ValueError("perturbations are implemented for step 2")
    if u.breaks:
        raise ValueError("perturbation moments need a control without jumps")
    m = S.algebra.m
    dec = decompose_bracket(S, zeta, pairs)
    Nmax = m * m + 2 * m
    blocks, coeffs = [], []
    vals = np.zeros((u.N, S.k))
    t = u.grid
    for k, ((x, y), alpha) in enumerate(zip(dec.pairs, dec.alphas), start=1):
        freqs = frequency_block(k, m)
        blocks.append(freqs)
        if alpha == 0:
            coeffs.append(np.zeros(len(freqs), dtype=complex))
            continue
        xi = y + 1j * x
        P, Q = _moments(S, u, xi, freqs)
        A = np.vstack([P[None, :], Q])  # (m + 1, m + 2)
        z = _null_vector(A, freqs)
        if z is None:
            raise SolverDegenerate(f"moment system for block {k} has no null vector")
        norm = np.sum(np.abs(z) ** 2 / (4.0 * np.pi * freqs))
        z = z * np.sqrt(alpha / norm)
        coeffs.append(z)
        vals = vals + np.real((_fourier(freqs, t) @ z)[:, None] * xi[None, :])
    v = SampledControl(vals)
    res = PerturbationResult(v, dec.pairs, dec.alphas, tuple(blocks), tuple(coeffs), dec.K, Nmax, dec.norm)
    cert = certificate(S, u, v, zeta, res)
    return PerturbationResult(v, dec.pairs, dec.alphas, tuple(blocks), tuple(coeffs), dec.K, Nmax, dec.norm, cert)


def _zeta_vector(S, zeta):
    alg = S.algebra
    z = np.zeros(alg.dim)
    z[list(alg.derived_indices)] = _derived_coords(S, zeta)
    return z


def certificate(S, u, v, zeta, result):
    shift = endpoint_step2(S, u + v) - endpoint_step2(S, u)
    endpoint_res = float(np.abs(shift - _zeta_vector(S, zeta)).max())
    nu = np.sqrt(max(energy(S, u), 0.0))
    nv = np.sqrt(max(energy(S, v), 0.0))
    inner = l2_inner(S, u, v)
    orth = abs(inner) / (nu * nv) if nu * nv > 0 else abs(inner)
    ev = energy(S, v)
    bound = result.bound
    return {
        "grid": u.N,
        "endpoint_residual": endpoint_res,
        "orthogonality_residual": orth,
        "energy": ev,
        "bound": bound,
        "K": result.K,
        "N": result.N,
        "pass": bool(endpoint_res <= ENDPOINT_TOL and orth <= ORTHOGONALITY_TOL and ev <= bound * (1 + 1e-12) + 1e-15),
    }


def verify_perturbation(S, u, result, zeta, v=None):
    """Recompute the certificate on the finer grid 2N - 1.

    ``v`` overrides the stored perturbation (used to check corrupted inputs)."""
    fine = 2 * u.N - 1
    uf = resample(u, fine)
    vf = result.evaluate(fine) if v is None else resample(v, fine)
    return certificate(S, uf, vf, zeta, result)
