"""Distance brackets: optimizer upper bounds, geodesic shooting, submetry lower bounds.

Upper bounds come from minimizing the energy of u = sum C[a] phi_a subject to
the endpoint constraint (the endpoint is exact for these controls, so sqrt of
the energy of any feasible control is a genuine upper bound). The solver runs
a quadratic-penalty continuation with BFGS, a Gauss-Newton projection onto
the constraint and a Newton-KKT polish. Starts that the penalty leaves
infeasible are rerun feasibility-first with SLSQP.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import least_squares, minimize

from .algebra import abelianization_norm, asymptotic_structure, project_ab
from .basis import basis_endpoint, basis_energy, control_basis
from .geodesics import (
    NormalGeodesicParams,
    covector_matrices,
    exact_distance,
    normal_geodesic_point,
    params_from_covector,
)


class Infeasible(RuntimeError):
    """No start reached the target within the endpoint tolerance."""

    def __init__(self, message, best_residual):
        super().__init__(f"{message} (best residual {best_residual:.3e})")
        self.best_residual = best_residual


@dataclass(frozen=True)
class Budget:
    n_max: int = 12
    starts: int = 16
    kind: str = "legendre"
    stages: int = 6
    factor: float = 10.0
    tol: float = 1e-6
    seed: int = 0
    shooting_starts: int = 4
    threads: int | None = None

    def with_(self, **kw):
        return replace(self, **kw)


@dataclass(frozen=True, eq=False)
class BasisWitness:
    """Control sum C[a] phi_a in a tabulated basis."""

    kind: str
    n_max: int
    coefficients: np.ndarray

    def basis(self, step=2):
        return control_basis(self.kind, self.n_max, step)

    def to_sampled(self, N=2049, step=2):
        return self.basis(step).sample(self.coefficients, N)

    def to_json(self):
        return {"basis": self.kind, "n_max": self.n_max, "coefficients": np.asarray(self.coefficients).tolist()}


@dataclass(frozen=True, eq=False)
class DistanceEstimate:
    lower: float
    upper: float
    target: np.ndarray
    witness: object = None
    residual: float = 0.0
    methods: tuple = ()
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.lower > self.upper * (1 + 1e-9) + 1e-12:
            raise ValueError(f"lower bound {self.lower} exceeds upper bound {self.upper}")

    def to_json(self):
        w = self.witness.to_json() if hasattr(self.witness, "to_json") else self.witness
        return {
            "lower": self.lower,
            "upper": self.upper,
            "target": np.asarray(self.target).tolist(),
            "residual": self.residual,
            "methods": list(self.methods),
            "witness": w,
        }


def _threads(budget):
    if budget.threads is not None:
        return max(1, int(budget.threads))
    return max(1, int(os.environ.get("NILGEO_THREADS", "1")))


def parallel_map(fn, items, threads=1):
    """Ordered map, threaded when threads > 1."""
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, items))


def coordinate_degrees(alg):
    """Weight of each exponential coordinate: 1 off [g,g], 2 on [g,g], 3 on [g,[g,g]]."""
    deg = np.ones(alg.dim)
    der = list(alg.derived_indices)
    deg[der] = 2
    if alg.step == 3:
        c = alg.brackets
        third = np.abs(c[:, der, :]).sum(axis=(0, 1)) > 0
        deg[third] = 3
    return deg


def distance_lower(S, target):
    return float(abelianization_norm(S, project_ab(S, target)))


def _scale(S, target):
    deg = coordinate_degrees(S.algebra)
    return max(1.0, float(np.sum(np.abs(target) ** (1.0 / deg))))


class _Problem:
    """Normalized energy minimization: variables x = C / sigma, residual
    weighted by sigma^-degree so that all coordinates are of order one."""

    def __init__(self, S, target, budget):
        self.S = S
        self.basis = control_basis(budget.kind, budget.n_max, S.step)
        self.target = np.asarray(target, dtype=float)
        self.sigma = _scale(S, self.target)
        self.weights = self.sigma ** -coordinate_degrees(S.algebra)
        self.shape = (self.basis.size, S.k)

    def coeffs(self, x):
        return self.sigma * x.reshape(self.shape)

    def residual(self, x, jac=False):
        C = self.coeffs(x)
        if not jac:
            return (basis_endpoint(self.S, self.basis, C) - self.target) * self.weights
        F, J = basis_endpoint(self.S, self.basis, C, jac=True)
        r = (F - self.target) * self.weights
        return r, (J.reshape(len(F), -1) * self.sigma) * self.weights[:, None]

    def energy(self, x, grad=False):
        e, g = basis_energy(self.S, self.basis, self.coeffs(x), grad=True)
        s2 = self.sigma**2
        if not grad:
            return e / s2
        return e / s2, g.ravel() / self.sigma

    def penalty(self, x, mu):
        e, ge = self.energy(x, grad=True)
        r, J = self.residual(x, jac=True)
        return e + mu * r @ r, ge + 2.0 * mu * (J.T @ r)

    def initial(self, rng, index):
        """Start 0 is the straight line to the abelian projection; others add noise."""
        S = self.S
        x = np.zeros(self.shape)
        hab = S.ab_matrix
        gi = np.linalg.inv(S.metric)
        xi = project_ab(S, self.target) / self.sigma
        w = gi @ hab.T @ np.linalg.solve(hab @ gi @ hab.T, xi)
        x[0] = w / max(self.basis.first[0], 1e-12)
        if index == 0:
            x = x + 1e-3 * rng.normal(size=self.shape)
        else:
            x = x + rng.normal(scale=1.0 / np.sqrt(1.0 + 0.3 * np.arange(self.shape[0]))[:, None], size=self.shape)
        return x.ravel()

    def project(self, x, iters=30):
        """Gauss-Newton steps onto the constraint set (minimal-norm corrections)."""
        for _ in range(iters):
            r, J = self.residual(x, jac=True)
            if np.abs(r).max() < 1e-14:
                break
            x = x - np.linalg.lstsq(J, r, rcond=None)[0]
        return x

    def constraint_hessians(self, x):
        """Second derivatives of the weighted residual, shape (dim, n, n)."""
        S = self.S
        n = x.size
        if S.step == 2:
            hor = S.horizontal
            c = S.algebra.brackets
            cc = np.einsum("ip,jq,ijk->kpq", hor, hor, c)
            H = np.einsum("ab,kpq->kapbq", self.basis.wedge, cc).reshape(S.dim, n, n)
            return H * (self.sigma**2 * self.weights)[:, None, None]
        eps = 1e-6
        _, J0 = self.residual(x, jac=True)
        H = np.empty((S.dim, n, n))
        for i in range(n):
            y = x.copy()
            y[i] += eps
            H[:, :, i] = (self.residual(y, jac=True)[1] - J0) / eps
        return 0.5 * (H + np.transpose(H, (0, 2, 1)))

    def newton_kkt(self, x, iters=25):
        """Newton iteration on the optimality system of min E s.t. r = 0."""
        n = x.size
        He = 2.0 * np.kron(self.basis.gram, self.S.metric)
        r, J = self.residual(x, jac=True)
        _, ge = self.energy(x, grad=True)
        nu = -np.linalg.lstsq(J.T, ge, rcond=None)[0]
        for _ in range(iters):
            Hc = self.constraint_hessians(x)
            HL = He + np.einsum("k,kij->ij", nu, Hc)
            m = len(r)
            K = np.zeros((n + m, n + m))
            K[:n, :n] = HL
            K[:n, n:] = J.T
            K[n:, :n] = J
            rhs = -np.concatenate([ge + J.T @ nu, r])
            try:
                step = np.linalg.lstsq(K, rhs, rcond=1e-13)[0]
            except np.linalg.LinAlgError:
                break
            x = x + step[:n]
            nu = nu + step[n:]
            r, J = self.residual(x, jac=True)
            _, ge = self.energy(x, grad=True)
            if np.abs(step[:n]).max() < 1e-13 * max(1.0, np.abs(x).max()):
                break
        return x


def _penalty_route(prob, budget, x):
    mu = 1.0
    for _ in range(budget.stages):
        res = minimize(prob.penalty, x, args=(mu,), jac=True, method="BFGS", options={"gtol": 1e-8, "maxiter": 1000})
        x = res.x
        mu *= budget.factor
    return prob.project(x)


def _feasible_route(prob, x):
    """Project the start onto the constraint set first, then minimize the
    energy with SLSQP. Slower, but it cannot be trapped by infeasible local
    minima of the penalty (these occur near abnormal curves)."""
    x = prob.project(x, iters=60)
    cons = {"type": "eq", "fun": prob.residual, "jac": lambda y: prob.residual(y, jac=True)[1]}
    res = minimize(lambda y: prob.energy(y, grad=True), x, jac=True, method="SLSQP", constraints=[cons],
                   options={"maxiter": 500, "ftol": 1e-14})
    return prob.project(res.x)


def _feasible(prob, x, tol):
    return bool(np.all(np.isfinite(x)) and np.abs(prob.residual(x) / prob.weights).max() <= tol)


def _solve_start(prob, budget, index, seed_seq):
    rng = np.random.default_rng(seed_seq)
    x0 = prob.initial(rng, index)
    tol = budget.tol * max(1.0, float(np.abs(prob.target).max()))
    x = _penalty_route(prob, budget, x0)
    if not _feasible(prob, x, tol):
        x = _feasible_route(prob, x0)
    e0 = prob.energy(x)
    y = prob.project(prob.newton_kkt(x))
    if np.all(np.isfinite(y)) and np.abs(prob.residual(y)).max() < 1e-12 and prob.energy(y) <= e0 * (1 + 1e-9):
        x = y
    C = prob.coeffs(x)
    resid = float(np.abs(basis_endpoint(prob.S, prob.basis, C) - prob.target).max())
    return float(basis_energy(prob.S, prob.basis, C)), resid, C


def distance_upper(S, target, budget=Budget()):
    """Upper bound from multistart energy minimization over the control basis."""
    target = np.asarray(target, dtype=float)
    if target.shape != (S.dim,):
        raise ValueError(f"target must have length {S.dim}")
    prob = _Problem(S, target, budget)
    seeds = np.random.SeedSequence(budget.seed).spawn(budget.starts)
    runs = parallel_map(lambda i: _solve_start(prob, budget, i, seeds[i]), range(budget.starts), _threads(budget))
    tol = budget.tol * max(1.0, float(np.abs(target).max()))
    feasible = [(e, i, r, C) for i, (e, r, C) in enumerate(runs) if r <= tol]
    if not feasible:
        raise Infeasible("no feasible control found", min(r for _, r, _ in runs))
    e, i, r, C = min(feasible, key=lambda t: (t[0], t[1]))
    upper = float(np.sqrt(e))
    lower = min(distance_lower(S, target), upper)
    return DistanceEstimate(lower, upper, target, BasisWitness(budget.kind, budget.n_max, C), r, ("optimizer",),
                            {"start": i, "energies": [float(t[0]) for t in runs]})


def _shoot_residual(S, target, weights):
    def fun(y):
        m = S.algebra.m
        P = params_from_covector(S, y[:m], y[m:])
        return (normal_geodesic_point(S, P, 1.0) - target) * weights
    return fun


def warm_covector(S, sampled):
    """Least-squares covector and initial velocity fitted to a sampled control."""
    Mmap, Zmap = covector_matrices(S)
    vals = sampled.values
    G = S.metric
    uV = vals @ G @ S.V_basis  # rho-orthonormal V coordinates
    h = sampled.h
    du = np.gradient(uV, h, axis=0)
    # du = M(lam) uV  and  drift = zeta(lam)
    rows = [np.einsum("lij,tj->til", Mmap, uV).reshape(-1, len(Mmap))]
    rhs = [du.ravel()]
    if Zmap.shape[1]:
        drift = vals @ G @ S.drift_basis
        rows.append(np.repeat(Zmap.T[None], len(vals), axis=0).reshape(-1, len(Mmap)))
        rhs.append(drift.ravel())
    lam = np.linalg.lstsq(np.vstack(rows), np.concatenate(rhs), rcond=None)[0]
    return lam, uV[0]


def distance_shooting(S, target, budget=Budget(), warm=None):
    """Shooting over normal geodesics; the square system is solved for the
    central covector and the initial V velocity. Falls back to the optimizer
    when no start converges."""
    if S.step != 2:
        raise ValueError("shooting is implemented for step 2")
    target = np.asarray(target, dtype=float)
    m = S.algebra.m
    v = S.V_basis.shape[1]
    sigma = _scale(S, target)
    weights = sigma ** -coordinate_degrees(S.algebra)
    fun = _shoot_residual(S, target, weights)
    if warm is None:
        warm = distance_upper(S, target, budget)
    starts = []
    if warm.witness is not None and isinstance(warm.witness, BasisWitness):
        lam, h0 = warm_covector(S, warm.witness.to_sampled(1025, S.step))
        starts.append(np.concatenate([lam, h0]))
    rng = np.random.default_rng(np.random.SeedSequence(budget.seed).spawn(budget.starts + 1)[-1])
    for _ in range(budget.shooting_starts):
        starts.append(np.concatenate([rng.normal(scale=2 * np.pi / sigma, size=m) * 2, rng.normal(scale=sigma, size=v)]))
    best = None
    for i, y0 in enumerate(starts):
        try:
            sol = least_squares(fun, y0, method="lm", xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=400 * (m + v + 1))
        except (np.linalg.LinAlgError, ValueError):
            continue
        P = params_from_covector(S, sol.x[:m], sol.x[m:])
        resid = float(np.abs(normal_geodesic_point(S, P, 1.0) - target).max())
        if resid > 1e-9 * max(1.0, float(np.abs(target).max())):
            continue
        e = P.energy()
        if best is None or (e, i) < (best[0], best[1]):
            best = (e, i, resid, P)
    if best is None:
        return warm
    e, i, resid, P = best
    upper = float(np.sqrt(e))
    if upper > warm.upper:
        return DistanceEstimate(warm.lower, warm.upper, target, warm.witness, warm.residual,
                                warm.methods + ("shooting-no-improvement",), warm.extra)
    lower = min(distance_lower(S, target), upper)
    return DistanceEstimate(lower, upper, target, P, resid, warm.methods + ("shooting",), {"start": i})


def distance(S, target, budget=Budget(), shooting=True):
    """Best bracket available: exact oracle, else optimizer (+ shooting for step 2)."""
    target = np.asarray(target, dtype=float)
    exact = exact_distance(S, target)
    if exact is not None:
        return exact_estimate(S, target, exact)
    est = distance_upper(S, target, budget)
    if shooting and S.step == 2:
        est = distance_shooting(S, target, budget, warm=est)
    return est


EXACT_REL = 1e-9


def exact_estimate(S, target, value):
    """Bracket around an exact value, widened by the root-finding tolerance."""
    lo = max(0.0, value * (1 - EXACT_REL) - EXACT_REL)
    hi = value * (1 + EXACT_REL) + EXACT_REL
    lo = max(lo, min(distance_lower(S, target), hi))
    return DistanceEstimate(lo, hi, np.asarray(target, dtype=float), None, 0.0, ("exact",), {"value": float(value)})


def asymptotic_distance(S, target, budget=Budget(), use_exact=False):
    """Distance for the structure restricted to V (the asymptotic metric)."""
    Sinf = asymptotic_structure(S)
    if use_exact:
        return distance(Sinf, target, budget)
    return distance_upper(Sinf, target, budget)


def geodesic_witness_control(S, witness, N=2049):
    """Sampled control of a witness (basis control or normal geodesic)."""
    from .geodesics import normal_geodesic_control

    if isinstance(witness, NormalGeodesicParams):
        return normal_geodesic_control(S, witness, N)
    if isinstance(witness, BasisWitness):
        return witness.to_sampled(N, S.step)
    raise TypeError("unknown witness type")
