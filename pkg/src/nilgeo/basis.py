"""Finite-dimensional control spaces used by the distance optimizer.

A control is u(t) = sum_a C[a] phi_a(t), with ``C`` an (n_basis, k) array of
horizontal coordinates. For such controls the endpoint is an exact polynomial
in ``C``: the iterated integrals of the basis functions are tabulated once, so
the optimizer never touches a time grid.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.polynomial import legendre

from .controls import SampledControl


def _legendre_values(n, x):
    """P_j(2x - 1) for j < n, shape (len(x), n)."""
    return legendre.legvander(2.0 * x - 1.0, n - 1)


def _integration_matrix(nq):
    """Gauss-Legendre nodes and weights on [0, 1] and the matrix mapping node
    values of f to node values of int_0^t f (exact for degree < nq)."""
    x, w = legendre.leggauss(nq)
    t = 0.5 * (x + 1.0)
    w = 0.5 * w
    vand = legendre.legvander(x, nq - 1)
    # columns: antiderivatives of P_j(2s - 1) from 0, evaluated at the nodes
    anti = np.empty_like(vand)
    for j in range(nq):
        c = np.zeros(nq)
        c[j] = 1.0
        anti[:, j] = 0.5 * legendre.legval(x, legendre.legint(c, lbnd=-1.0))
    norms = 2.0 * np.arange(nq) + 1.0
    inv_vand = (norms[:, None] * vand.T) * w[None, :]
    return t, w, anti @ inv_vand


@dataclass(frozen=True, eq=False)
class ControlBasis:
    kind: str
    n_max: int
    nodes: np.ndarray
    weights: np.ndarray
    phi: np.ndarray  # (nq, nb) basis values at the nodes
    Phi: np.ndarray  # (nq, nb) running integrals
    first: np.ndarray  # (nb,) int phi_a
    gram: np.ndarray  # (nb, nb) int phi_a phi_b
    wedge: np.ndarray  # (nb, nb) antisymmetric part of int Phi_a phi_b
    t1: np.ndarray | None  # (nb, nb, nb) int W_ab(s) phi_c(s) ds, step 3 only
    t2: np.ndarray | None  # (nb, nb, nb) int Phi_a Phi_b phi_c

    @property
    def size(self):
        return self.phi.shape[1]

    def values(self, t):
        t = np.asarray(t, dtype=float)
        return _basis_values(self.kind, self.n_max, t)

    def sample(self, C, N):
        t = np.linspace(0.0, 1.0, N)
        return SampledControl(self.values(t) @ np.asarray(C))


def _basis_values(kind, n_max, t):
    if kind == "legendre":
        return _legendre_values(n_max + 1, t) * np.sqrt(2.0 * np.arange(n_max + 1) + 1.0)
    if kind == "fourier":
        n = np.arange(1, n_max + 1)
        arg = 2.0 * np.pi * np.outer(t, n)
        cols = [np.ones((len(t), 1))]
        cols.append(np.sqrt(2.0) * np.cos(arg))
        cols.append(np.sqrt(2.0) * np.sin(arg))
        return np.hstack(cols)
    raise ValueError(f"unknown basis kind {kind!r}")


@lru_cache(maxsize=32)
def control_basis(kind="legendre", n_max=12, step=2):
    """Tabulated basis. Legendre functions are L2-orthonormal shifted Legendre
    polynomials of degree <= n_max; the Fourier basis is 1, sqrt2 cos, sqrt2 sin
    up to frequency n_max."""
    if kind == "legendre":
        nq = max(64, 3 * n_max + 8)
    else:
        nq = max(96, 12 * n_max + 64)
    t, w, S = _integration_matrix(nq)
    phi = _basis_values(kind, n_max, t)
    Phi = S @ phi
    first = w @ phi
    gram = np.einsum("q,qa,qb->ab", w, phi, phi)
    W = np.einsum("q,qa,qb->ab", w, Phi, phi)
    wedge = 0.5 * (W - W.T)
    t1 = t2 = None
    if step == 3:
        Wrun = np.einsum("pq,qa,qb->pab", S, Phi, phi)
        t1 = np.einsum("q,qab,qc->abc", w, Wrun, phi)
        t2 = np.einsum("q,qa,qb,qc->abc", w, Phi, Phi, phi)
    for a in (phi, Phi, first, gram, wedge, t1, t2):
        if a is not None:
            a.setflags(write=False)
    return ControlBasis(kind, n_max, t, w, phi, Phi, first, gram, wedge, t1, t2)


def basis_endpoint(S, basis, C, jac=False):
    """Exact endpoint of u = sum C[a] phi_a (and optionally d endpoint / dC,
    shape (dim, nb, k))."""
    alg = S.algebra
    c = alg.brackets
    n = alg.dim
    A = np.asarray(C) @ S.horizontal.T  # (nb, dim)
    # X[b, q, k]: coefficient of e_k in [e_q, A_b]
    X = np.einsum("qjk,bj->bqk", c, A)
    WA = basis.wedge @ A
    F = basis.first @ A + 0.5 * np.einsum("ai,aik->k", WA, -X)
    if S.step == 3:
        P = np.einsum("ai,bik->abk", A, X)  # [A_a, A_b]
        G = np.tensordot(basis.t1, A, axes=(2, 0))  # sum_c t1_abc A_c
        Q = np.tensordot(basis.t2, P, axes=([1, 2], [0, 1]))  # sum_bc t2_abc P_bc
        F = F + 0.25 * np.einsum("abi,ijk,abj->k", P, c, G) + np.einsum("ai,aik->k", Q, -X) / 12.0
    if not jac:
        return F
    nb = basis.size
    J = np.zeros((n, nb, n))
    J += basis.first[None, :, None] * np.eye(n)[:, None, :]
    J += np.einsum("qkl,pk->lpq", c, WA)
    if S.step == 3:
        Y = np.einsum("kml,abm->abkl", c, G)
        J += 0.25 * np.einsum("bqk,pbkl->lpq", X, Y)
        J -= 0.25 * np.einsum("aqk,apkl->lpq", X, Y)
        R = np.tensordot(P, basis.t1, axes=([0, 1], [0, 1]))  # (n, nb): sum_ab t1_abp P_ab
        J += 0.25 * np.einsum("kp,kql->lpq", R, c)
        J += np.einsum("qkl,pk->lpq", c, Q) / 12.0
        U = np.tensordot(basis.t2, A, axes=(0, 0))  # U[x, y] = sum_a t2_axy A_a
        UC = np.einsum("pci,ikl->pckl", U, c)
        J += np.einsum("pckl,cqk->lpq", UC, X) / 12.0
        J -= np.einsum("bpkl,bqk->lpq", UC, X) / 12.0
    Jc = np.einsum("kai,ij->kaj", J, S.horizontal)
    return F, Jc


def basis_energy(S, basis, C, grad=False):
    C = np.asarray(C)
    e = np.einsum("ab,ai,ij,bj->", basis.gram, C, S.metric, C)
    if not grad:
        return float(e)
    return float(e), 2.0 * basis.gram @ C @ S.metric
