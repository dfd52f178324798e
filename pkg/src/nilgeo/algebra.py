"""Nilpotent Lie algebras given by structure constants, the group law in
exponential coordinates, and left-invariant sub-Riemannian structures.

Points of the group are plain 1-D arrays of exponential coordinates. The
product is ``x + y + [x,y]/2`` for step 2 and the truncated BCH series for
step 3. Horizontal vectors are stored in coordinates of the horizontal basis
(columns of ``SubRiemannianStructure.horizontal``), so the metric is a plain
matrix.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from functools import cached_property
from importlib import resources
from pathlib import Path

import numpy as np

RANK_TOL = 1e-10
ISOMETRY_TOL = 1e-8


class ValidationError(ValueError):
    """Raised when an algebra or structure violates one of its invariants."""


class NoIsometry(ValueError):
    """Raised when two structures have different abelianization norms."""


def _readonly(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def _rank(a, tol=RANK_TOL):
    a = np.atleast_2d(a)
    if a.size == 0:
        return 0
    s = np.linalg.svd(a, compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.sum(s > tol * s[0]))


def _null_space(a, tol=RANK_TOL):
    a = np.atleast_2d(a)
    n = a.shape[1]
    if a.shape[0] == 0:
        return np.eye(n)
    u, s, vt = np.linalg.svd(a)
    scale = s[0] if s.size and s[0] > 0 else 1.0
    r = int(np.sum(s > tol * scale))
    return vt[r:].T.copy()


@dataclass(frozen=True, eq=False)
class NilpotentAlgebraSpec:
    """Structure constants ``brackets[i, j, k]`` = coefficient of e_k in [e_i, e_j]."""

    dim: int
    step: int
    basis_names: tuple
    brackets: np.ndarray
    derived_indices: tuple = field(default=())

    def __post_init__(self):
        c = _readonly(self.brackets)
        object.__setattr__(self, "brackets", c)
        object.__setattr__(self, "basis_names", tuple(self.basis_names))
        if not self.derived_indices:
            support = np.flatnonzero(np.abs(c).sum(axis=(0, 1)) > 0)
            object.__setattr__(self, "derived_indices", tuple(int(i) for i in support))
        else:
            object.__setattr__(self, "derived_indices", tuple(int(i) for i in self.derived_indices))
        self.validate()

    def validate(self):
        n = self.dim
        c = self.brackets
        if c.shape != (n, n, n):
            raise ValidationError(f"structure constants must have shape {(n, n, n)}, got {c.shape}")
        if len(self.basis_names) != n:
            raise ValidationError("basis_names must have one entry per basis vector")
        if self.step not in (2, 3):
            raise ValidationError(f"step must be 2 or 3, got {self.step}")
        if not np.all(np.isfinite(c)):
            raise ValidationError("structure constants must be finite")
        scale = max(1.0, float(np.abs(c).max()))
        tol = 1e-12 * scale
        for i in range(n):
            for j in range(n):
                if np.abs(c[i, j] + c[j, i]).max() > tol:
                    raise ValidationError(f"antisymmetry fails for pair ({i}, {j})")
        outside = [k for k in range(n) if k not in self.derived_indices]
        if outside and np.abs(c[:, :, outside]).max() > tol:
            raise ValidationError("brackets are not supported on derived_indices")
        flat = c.reshape(n * n, n)
        if _rank(flat) != len(self.derived_indices):
            raise ValidationError("derived algebra must be spanned by the basis vectors listed in derived_indices")
        # ad matrices: ad[i][k, j] = coefficient of e_k in [e_i, e_j]
        ad = np.transpose(c, (0, 2, 1))
        tol3 = 1e-12 * scale * scale
        for i in range(n):
            for j in range(n):
                for k in range(i, n):
                    jac = ad[i] @ c[j, k] + ad[j] @ c[k, i] + ad[k] @ c[i, j]
                    if np.abs(jac).max() > tol3:
                        raise ValidationError(f"Jacobi identity fails on triple ({i}, {j}, {k})")
        # nilpotency: products of `step` ad matrices vanish
        prod = [np.eye(n)]
        for _ in range(self.step):
            prod = [a @ p for a in ad for p in prod]
        if max(np.abs(p).max() for p in prod) > 1e-12 * scale ** self.step:
            raise ValidationError(f"algebra is not nilpotent of step {self.step}")

    @property
    def abelian_indices(self):
        return tuple(i for i in range(self.dim) if i not in self.derived_indices)

    @property
    def m(self):
        return len(self.derived_indices)

    def basis_vector(self, name):
        v = np.zeros(self.dim)
        v[self.basis_names.index(name)] = 1.0
        return v


def bracket(alg, x, y):
    """Lie bracket of algebra vectors; broadcasts over leading axes."""
    x = np.asarray(x)
    y = np.asarray(y)
    if x.shape[-1] != alg.dim or y.shape[-1] != alg.dim:
        raise ValueError(f"vectors must have length {alg.dim}")
    return np.einsum("...i,...j,ijk->...k", x, y, alg.brackets)


def multiply(alg, p, q):
    """Group product in exponential coordinates (exact for step <= 3)."""
    p = np.asarray(p)
    q = np.asarray(q)
    if not np.iscomplexobj(p) and not np.iscomplexobj(q):
        p = p.astype(float)
        q = q.astype(float)
    if p.shape[-1] != alg.dim or q.shape[-1] != alg.dim:
        raise ValueError(f"points must have length {alg.dim}")
    pq = bracket(alg, p, q)
    out = p + q + 0.5 * pq
    if alg.step == 3:
        out = out + (bracket(alg, p, pq) - bracket(alg, q, pq)) / 12.0
    return out


def inverse(alg, p):
    return -np.asarray(p, dtype=float)


def multiply_many(alg, points):
    """Ordered product p_0 * p_1 * ... of the rows of ``points`` (pairwise tree)."""
    pts = np.asarray(points, dtype=float)
    if len(pts) == 0:
        return np.zeros(alg.dim)
    while len(pts) > 1:
        if len(pts) % 2:
            head = multiply(alg, pts[:-1:2], pts[1::2])
            pts = np.vstack([head, pts[-1:]])
        else:
            pts = multiply(alg, pts[0::2], pts[1::2])
    return pts[0]


@dataclass(frozen=True, eq=False)
class SubRiemannianStructure:
    """Left-invariant structure: horizontal basis (columns, algebra coords) and metric on it."""

    algebra: NilpotentAlgebraSpec
    horizontal: np.ndarray
    metric: np.ndarray
    name: str = ""

    def __post_init__(self):
        h = _readonly(np.atleast_2d(self.horizontal))
        g = _readonly(self.metric)
        object.__setattr__(self, "horizontal", h)
        object.__setattr__(self, "metric", g)
        alg = self.algebra
        if h.shape[0] != alg.dim:
            raise ValidationError("horizontal basis vectors must have length dim")
        k = h.shape[1]
        if g.shape != (k, k):
            raise ValidationError(f"metric must be {k}x{k}")
        if np.abs(g - g.T).max() > 1e-12 * max(1.0, np.abs(g).max()):
            raise ValidationError("metric is not symmetric")
        if np.linalg.eigvalsh(g).min() <= 0:
            raise ValidationError("metric is not positive definite")
        if _rank(h) != k:
            raise ValidationError("horizontal basis vectors are linearly dependent")
        if _rank(self.ab_matrix) != len(alg.abelian_indices):
            raise ValidationError("horizontal space together with [g,g] does not span g")

    @property
    def k(self):
        return self.horizontal.shape[1]

    @property
    def dim(self):
        return self.algebra.dim

    @property
    def step(self):
        return self.algebra.step

    @property
    def ab_matrix(self):
        """pi_ab restricted to the horizontal space, in horizontal coordinates."""
        return self.horizontal[list(self.algebra.abelian_indices), :]

    def inner(self, a, b):
        return np.einsum("...i,ij,...j->...", a, self.metric, b)

    def _orthonormalize(self, cols):
        out = []
        for v in cols.T:
            w = v.copy()
            for e in out:
                w = w - self.inner(e, w) * e
            nrm = np.sqrt(max(self.inner(w, w), 0.0))
            if nrm > RANK_TOL * max(1.0, np.sqrt(max(self.inner(v, v), 0.0))):
                out.append(w / nrm)
        return np.array(out).T.reshape(self.k, len(out))

    @cached_property
    def drift_basis(self):
        """rho-orthonormal basis of the horizontal space intersected with [g,g] (horizontal coords)."""
        n = _null_space(self.ab_matrix)
        if n.shape[1] == 0:
            return np.zeros((self.k, 0))
        # eigen-decomposition of the Gram matrix on the null space
        gram = n.T @ self.metric @ n
        w, q = np.linalg.eigh(gram)
        return (n @ q) / np.sqrt(w)

    @cached_property
    def V_basis(self):
        """rho-orthonormal basis of V, the complement of the drift space, by Gram-Schmidt
        on the projected coordinate vectors (deterministic order)."""
        d = self.drift_basis
        proj = np.eye(self.k) - d @ d.T @ self.metric
        return self._orthonormalize(proj)

    @property
    def V_alg(self):
        """V basis as algebra vectors (columns)."""
        return self.horizontal @ self.V_basis

    @property
    def drift_alg(self):
        return self.horizontal @ self.drift_basis

    @property
    def Q(self):
        return self.V_basis.shape[1] + 2 * self.algebra.m

    @property
    def is_carnot(self):
        return self.drift_basis.shape[1] == 0

    def to_algebra(self, c):
        """Horizontal coordinates -> algebra vectors."""
        return np.asarray(c) @ self.horizontal.T

    def split_point(self, p):
        """Coordinates (a, z) of p = V_alg a + z in the decomposition V + [g,g]."""
        p = np.asarray(p, dtype=float)
        der = list(self.algebra.derived_indices)
        ab = list(self.algebra.abelian_indices)
        vab = self.V_alg[ab, :]
        a = np.linalg.solve(vab, p[..., ab].T).T if vab.size else p[..., ab]
        z = p[..., der] - a @ self.V_alg[der, :].T
        return a, z

    def join_point(self, a, z):
        p = np.asarray(a) @ self.V_alg.T
        p = np.array(p, dtype=float)
        p[..., list(self.algebra.derived_indices)] += z
        return p

    def dilate(self, p, lam):
        """Graded dilation for step-2 structures: lam on V, lam^2 on [g,g]."""
        if self.step != 2:
            raise ValueError("dilation of the V + [g,g] grading requires step 2")
        a, z = self.split_point(p)
        return self.join_point(lam * a, lam * lam * z)

    def to_dict(self):
        alg = self.algebra
        n = alg.dim
        brackets = []
        for i in range(n):
            for j in range(i + 1, n):
                nz = {str(k): float(alg.brackets[i, j, k]) for k in range(n) if alg.brackets[i, j, k] != 0}
                if nz:
                    brackets.append({"i": i, "j": j, "coeffs": nz})
        return {
            "dim": n,
            "step": alg.step,
            "basis": list(alg.basis_names),
            "brackets": brackets,
            "horizontal": self.horizontal.T.tolist(),
            "metric": self.metric.ravel().tolist(),
        }

    def hash(self):
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass(frozen=True, eq=False)
class Automorphism:
    """Linear map in exponential coordinates that commutes with the bracket."""

    algebra: NilpotentAlgebraSpec
    matrix: np.ndarray

    def __post_init__(self):
        f = _readonly(self.matrix)
        object.__setattr__(self, "matrix", f)
        alg = self.algebra
        n = alg.dim
        if f.shape != (n, n):
            raise ValidationError("automorphism matrix has the wrong shape")
        if _rank(f, 1e-12) < n:
            raise ValidationError("automorphism matrix is singular")
        c = alg.brackets
        lhs = np.einsum("kl,ijl->ijk", f, c)
        rhs = np.einsum("ai,bj,abk->ijk", f, f, c)
        if np.abs(lhs - rhs).max() > 1e-10 * max(1.0, np.abs(f).max() ** 2):
            raise ValidationError("map does not commute with the bracket")

    def __call__(self, p):
        return np.asarray(p) @ self.matrix.T

    def compose(self, other):
        return Automorphism(self.algebra, self.matrix @ other.matrix)


def abelianization_gram(S):
    """Gram matrix A of the abelianization norm: |xi|^2 = xi^T A xi."""
    hab = S.ab_matrix
    return np.linalg.inv(hab @ np.linalg.solve(S.metric, hab.T))


def abelianization_norm(S, xi):
    xi = np.asarray(xi, dtype=float)
    if xi.shape[-1] != len(S.algebra.abelian_indices):
        raise ValueError("xi must be expressed in the complement basis of [g,g]")
    a = abelianization_gram(S)
    return np.sqrt(np.maximum(np.einsum("...i,ij,...j->...", xi, a, xi), 0.0))


def project_ab(S, p):
    return np.asarray(p)[..., list(S.algebra.abelian_indices)]


def asymptotic_structure(S):
    """Structure whose horizontal space is V with the restricted metric."""
    if S.is_carnot:
        return S
    name = S.name + "_asymptotic" if S.name else ""
    return SubRiemannianStructure(S.algebra, S.V_alg, np.eye(S.V_basis.shape[1]), name=name)


def graph_isometry(S, S2):
    """Automorphism (x, y) -> (x, y + Lx) carrying S onto S2, when their
    abelianization norms agree."""
    if S.algebra is not S2.algebra and not np.array_equal(S.algebra.brackets, S2.algebra.brackets):
        raise ValueError("structures live on different algebras")
    alg = S.algebra
    if alg.step != 2:
        raise ValueError("graph isometries are only defined for step 2")
    nab = len(alg.abelian_indices)
    for T in (S, S2):
        if T.k != nab:
            raise ValueError("horizontal space must be a complement of [g,g]")
    a1 = abelianization_gram(S)
    a2 = abelianization_gram(S2)
    if np.abs(a1 - a2).max() > ISOMETRY_TOL * max(1.0, np.abs(a1).max()):
        raise NoIsometry("abelianization norms differ")
    ab = list(alg.abelian_indices)
    der = list(alg.derived_indices)

    def graph(T):
        return T.horizontal[der, :] @ np.linalg.inv(T.horizontal[ab, :])

    L = graph(S2) - graph(S)
    f = np.eye(alg.dim)
    f[np.ix_(der, ab)] = L
    phi = Automorphism(alg, f)
    # push-forward of the metric agrees with the metric of S2
    t = np.linalg.lstsq(S2.horizontal, f @ S.horizontal, rcond=None)[0]
    if np.abs(t.T @ S2.metric @ t - S.metric).max() > ISOMETRY_TOL * max(1.0, np.abs(S.metric).max()):
        raise NoIsometry("push-forward metric does not match")
    return phi


def shear_automorphism(S, L):
    """g -> g * L(pi_ab(g)) for a linear map L: g/[g,g] -> [g,g] (matrix m x (dim-m))."""
    alg = S.algebra
    L = np.atleast_2d(np.asarray(L, dtype=float))
    ab = list(alg.abelian_indices)
    der = list(alg.derived_indices)
    if L.shape != (len(der), len(ab)):
        raise ValueError(f"L must have shape {(len(der), len(ab))}")
    f = np.eye(alg.dim)
    f[np.ix_(der, ab)] = L
    return Automorphism(alg, f)


def algebra_from_dict(d):
    try:
        n = int(d["dim"])
        step = int(d["step"])
        names = list(d.get("basis") or [f"e{i}" for i in range(n)])
        c = np.zeros((n, n, n))
        for entry in d.get("brackets", []):
            i, j = int(entry["i"]), int(entry["j"])
            if i == j:
                raise ValidationError(f"bracket entry [{i},{i}] must be zero")
            for k, v in entry["coeffs"].items():
                c[i, j, int(k)] += float(v)
                c[j, i, int(k)] -= float(v)
    except (KeyError, TypeError, IndexError, ValueError) as exc:
        raise ValidationError(f"malformed algebra spec: {exc!r}") from exc
    return NilpotentAlgebraSpec(n, step, tuple(names), c)


def structure_from_dict(d, name=""):
    alg = algebra_from_dict(d)
    n = alg.dim
    hor = d.get("horizontal", list(range(n)))
    try:
        if all(isinstance(x, int) for x in hor):
            h = np.eye(n)[:, hor]
        else:
            h = np.array(hor, dtype=float).T
        k = h.shape[1]
        g = np.array(d.get("metric", np.eye(k).ravel()), dtype=float).reshape(k, k)
    except (ValueError, IndexError) as exc:
        raise ValidationError(f"malformed horizontal space or metric: {exc}") from exc
    return SubRiemannianStructure(alg, h, g, name=name)


def bundled_specs():
    return sorted(p.name for p in resources.files("nilgeo.specs").iterdir() if p.name.endswith(".json"))


def load_structure(path_or_name):
    """Load a JSON spec from a path, or by name from the bundled specs."""
    p = Path(path_or_name)
    if p.exists():
        text = p.read_text()
    else:
        name = p.name if p.suffix else p.name + ".json"
        res = resources.files("nilgeo.specs") / name
        if not res.is_file():
            raise FileNotFoundError(f"no spec file {path_or_name!r} (bundled: {', '.join(bundled_specs())})")
        text = res.read_text()
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"spec is not valid JSON: {exc}") from exc
    return structure_from_dict(d, name=p.stem)
