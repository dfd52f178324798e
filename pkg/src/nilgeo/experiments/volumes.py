"""Ball volumes: Riemannian Heisenberg by quadrature, Monte Carlo for general
structures, and the l-infinity Finsler ball of the Heisenberg group."""

from __future__ import annotations

from dataclasses import asdict

import numpy as np
from scipy.integrate import quad
from scipy.optimize import brentq

from ..geodesics import exact_distance, heisenberg_sr_distance
from ..metrics import Budget, distance_lower
from .report import ExperimentReport, brackets, row_seeds

TWO_PI = 2.0 * np.pi
QUAD_TOL = 1e-13
SMALL = 1e-2


def _cos_term(a):
    """(1 - cos a) / a^2."""
    a = np.asarray(a, dtype=float)
    s = a * a
    return np.where(a < SMALL, 0.5 - s / 24.0 + s * s / 720.0, (1.0 - np.cos(a)) / np.where(a < SMALL, 1.0, s))


def _sin_term(a):
    """(a - sin a) / a^2."""
    a = np.asarray(a, dtype=float)
    s = a * a
    return np.where(a < SMALL, a / 6.0 - a * s / 120.0 + a * s * s / 5040.0,
                    (a - np.sin(a)) / np.where(a < SMALL, 1.0, s))


def _slope_term(a):
    """(2 sin a - a cos a - a) / a^3, the derivative of (a - sin a) / (2 a^2) times 2."""
    a = np.asarray(a, dtype=float)
    s = a * a
    safe = np.where(a < SMALL, 1.0, a)
    return np.where(a < SMALL, 1.0 / 6.0 - s / 40.0 + s * s / 1008.0,
                    (2.0 * np.sin(a) - a * np.cos(a) - a) / (safe * safe * safe))


def _volume_integrand(alpha, r):
    """x(alpha)^2 dz/dalpha on the profile of the Riemannian ball of radius r."""
    t2 = r * r - alpha * alpha
    x2 = 2.0 * t2 * _cos_term(alpha)
    dz = 1.0 - alpha * _sin_term(alpha) + 0.5 * t2 * _slope_term(alpha)
    return x2 * dz


def heisenberg_ball_volume(r):
    """Volume of the unit-speed Riemannian Heisenberg ball of radius r (solid of revolution)."""
    if r <= 0:
        raise ValueError("r must be positive")
    top = min(TWO_PI, r)
    val, _ = quad(lambda a: float(_volume_integrand(a, r)), 0.0, top, epsabs=0.0, epsrel=QUAD_TOL, limit=400)
    return TWO_PI * val


def quartic_constants():
    """C4, C2, C0 of V(r) = C4 r^4 + C2 r^2 + C0 (r >= 2 pi) from their own integrals.

    With A = 2(1 - cos a)/a^2, B = 1 - (a - sin a)/a and D = (2 sin a - a cos a - a)/(2 a^3)
    the integrand is (r^2 - a^2) A (B + (r^2 - a^2) D)."""
    A = lambda a: 2.0 * float(_cos_term(a))
    B = lambda a: 1.0 - a * float(_sin_term(a))
    D = lambda a: 0.5 * float(_slope_term(a))

    def I(f):
        return TWO_PI * quad(f, 0.0, TWO_PI, epsabs=0.0, epsrel=QUAD_TOL, limit=400)[0]

    c4 = I(lambda a: A(a) * D(a))
    c2 = I(lambda a: A(a) * B(a) - 2.0 * a * a * A(a) * D(a))
    c0 = I(lambda a: -a * a * A(a) * B(a) + a**4 * A(a) * D(a))
    return c4, c2, c0


def c4_closed_form():
    """2 pi int_0^{2 pi} ((1 - cos a)/a^2) ((2 sin a - a cos a - a)/a^3) da."""
    return TWO_PI * quad(lambda a: float(_cos_term(a) * _slope_term(a)), 0.0, TWO_PI,
                         epsabs=0.0, epsrel=QUAD_TOL, limit=400)[0]


def heisenberg_volume(r_grid=(7.0, 8.0, 10.0, 15.0), small=(0.1, 0.05, 0.025)):
    """V(r) by quadrature; quartic fit on {1, r^2, r^4} for r > 2 pi; small-r ratios V/r^3."""
    rows = [{"r": float(r), "volume": heisenberg_ball_volume(r), "regime": "large" if r > TWO_PI else "small"}
            for r in r_grid]
    rows += [{"r": float(r), "volume": heisenberg_ball_volume(r), "regime": "origin"} for r in small]
    large = [row for row in rows if row["regime"] == "large"]
    rr = np.array([row["r"] for row in large])
    vv = np.array([row["volume"] for row in large])
    A = np.vstack([rr**4, rr**2, np.ones_like(rr)]).T
    coef, *_ = np.linalg.lstsq(A, vv, rcond=None)
    fit_res = float(np.max(np.abs(A @ coef - vv) / vv)) if len(large) else float("nan")
    c4, c2, c0 = quartic_constants()
    c4_formula = c4_closed_form()
    for row in rows:
        row["over_r3"] = row["volume"] / row["r"] ** 3
        if row["regime"] == "large":
            row["quartic"] = c4 * row["r"] ** 4 + c2 * row["r"] ** 2 + c0
    ratios = [row["over_r3"] for row in rows if row["regime"] == "origin"]
    left = TWO_PI * quad(lambda a: float(_volume_integrand(a, TWO_PI)), 0.0, TWO_PI, epsabs=0.0, epsrel=QUAD_TOL, limit=400)[0]
    right = c4 * TWO_PI**4 + c2 * TWO_PI**2 + c0
    summary = {
        "fit_C4": float(coef[0]), "fit_C2": float(coef[1]), "fit_C0": float(coef[2]),
        "C4": c4, "C2": c2, "C0": c0, "C4_formula": c4_formula,
        "fit_relative_residual": fit_res,
        "C4_agreement": abs(coef[0] - c4_formula) / abs(c4_formula),
        "continuity_2pi": abs(left - right) / abs(right),
        "small_r_ratios": ratios,
        "euclidean_ratio": 4.0 * np.pi / 3.0,
    }
    sig = {
        "quartic_law": fit_res <= 1e-9,
        "C4_matches_formula": summary["C4_agreement"] <= 1e-9,
        "continuity": summary["continuity_2pi"] <= 1e-9,
        "small_r_bounded": bool(ratios) and max(ratios) <= 2.0 * min(ratios),
    }
    return ExperimentReport("heisenberg_volume", rows, summary, None,
                            {"r_grid": list(r_grid), "small": list(small), "quad_epsrel": QUAD_TOL}, sig)


def hxr_ball_volume(r):
    """Volume of the H x R ball of radius r: int_{-r}^{r} V_H(sqrt(r^2 - t^2)) dt."""
    f = lambda t: heisenberg_ball_volume(np.sqrt(r * r - t * t)) if t < r else 0.0
    return 2.0 * quad(f, 0.0, r, epsabs=0.0, epsrel=1e-10, limit=200)[0]


def sr_unit_ball_volume():
    """Volume of the SR Heisenberg unit ball from the sphere profile
    rho = 2 sin(phi/2)/phi, z = (phi - sin phi)/(2 phi^2), phi in (0, 2 pi)."""
    # d/dphi of (phi - sin phi)/(2 phi^2) = (2 sin phi - phi cos phi - phi)/(2 phi^3)
    f = lambda p: float(2.0 * _cos_term(p) * 0.5 * _slope_term(p))
    return TWO_PI * quad(f, 0.0, TWO_PI, epsabs=0.0, epsrel=QUAD_TOL, limit=400)[0]


def vertical_extent(S, r, budget=None, rays=9):
    """Coarse scan of the largest |z| on the ball of radius r, per central coordinate.

    Along rays (rho u, z e_j) with rho on a grid in [0, r), the boundary height is
    found by bisection on the distance upper bound. The result is padded by 25%."""
    m = S.algebra.m
    v = S.V_basis.shape[1]
    out = np.zeros(m)
    for j in range(m):
        e = np.zeros(m)
        e[j] = 1.0
        best = 0.0
        for rho in np.linspace(0.0, r, rays, endpoint=False):
            u = np.zeros(v)
            if v:
                u[0] = rho
            hi = max(r, 1.0)
            while brackets(S, S.join_point(u, hi * e), budget)[0][0, 0] <= r:
                hi *= 2.0
            lo = 0.0
            for _ in range(40):
                mid = 0.5 * (lo + hi)
                if brackets(S, S.join_point(u, mid * e), budget)[0][0, 1] <= r:
                    lo = mid
                else:
                    hi = mid
            best = max(best, hi)
        out[j] = 1.25 * best
    return out


def _strata(dim, n_samples, target_per_cell=8):
    per_axis = max(1, int((n_samples / target_per_cell) ** (1.0 / dim)))
    return per_axis


def mc_ball_volume(S, r, n_samples=20000, seed=0, budget=Budget(starts=4), zmax=None):
    """Stratified Monte Carlo volume of the ball of radius r.

    The box is |a_i| <= r on V (distance dominates the abelianization norm)
    and |z_j| <= zmax_j from ``vertical_extent``. Points with
    lower <= r < upper count as 1/2 and contribute the ambiguity error."""
    v = S.V_basis.shape[1]
    m = S.algebra.m
    if zmax is None:
        zmax = vertical_extent(S, r, budget)
    half = np.concatenate([np.full(v, float(r)), np.asarray(zmax, dtype=float)])
    dim = len(half)
    k = _strata(dim, n_samples)
    cells = k**dim
    per = max(2, n_samples // cells)
    rng = np.random.default_rng(seed)
    idx = np.stack(np.unravel_index(np.arange(cells), (k,) * dim), axis=-1)
    u = (idx[:, None, :] + rng.uniform(size=(cells, per, dim))) / k
    pts = (2.0 * u - 1.0) * half
    coords = pts.reshape(-1, dim)
    points = S.join_point(coords[:, :v], coords[:, v:])
    # points outside by the abelianization bound need no distance evaluation
    lower_ab = np.array([distance_lower(S, p) for p in points]) if exact_distance(S, points[:1]) is None else None
    if lower_ab is not None:
        need = lower_ab <= r
        br = np.zeros((len(points), 2))
        br[~need] = np.c_[lower_ab[~need], np.full((~need).sum(), np.inf)]
        sub, _ = brackets(S, points[need], budget, row_seeds(seed, int(need.sum())))
        br[need] = sub
    else:
        br, _ = brackets(S, points)
    inside = np.where(br[:, 1] <= r, 1.0, np.where(br[:, 0] > r, 0.0, 0.5)).reshape(cells, per)
    ambiguous = (np.abs(inside - 0.5) < 0.25).reshape(cells, per)
    box = float(np.prod(2.0 * half))
    cell_vol = box / cells
    est = cell_vol * inside.mean(axis=1).sum()
    var = (cell_vol**2 * inside.var(axis=1, ddof=1) / per).sum()
    amb = 0.5 * cell_vol * ambiguous.mean(axis=1).sum()
    top = np.abs(coords[:, v:]).max(axis=1) >= 0.9 * np.max(np.asarray(zmax)) if m else np.zeros(len(coords), bool)
    summary = {
        "r": float(r),
        "estimate": float(est),
        "stat_error": float(np.sqrt(var)),
        "ambiguity_error": float(amb),
        "combined_sigma": float(np.hypot(np.sqrt(var), amb)),
        "box_volume": box,
        "zmax": np.asarray(zmax).tolist(),
        "samples": int(cells * per),
        "strata": cells,
        "ambiguous": int(ambiguous.sum()),
        "inside_near_box_top": int((inside.ravel()[top] > 0).sum()),
    }
    rows = [{"point": p.tolist(), "lower": float(b[0]), "upper": float(b[1]), "inside": float(w)}
            for p, b, w in zip(points, br, inside.ravel())]
    cfg = {"structure": S.name, "algebra_hash": S.hash(), "r": float(r), "n_samples": n_samples,
           "budget": asdict(budget)}
    return ExperimentReport("mc_ball_volume", rows, summary, seed, cfg,
                            {"box_contains_ball": summary["inside_near_box_top"] == 0})


def _sr_zmax(rho, r, iters=64):
    """Largest z with d_SR(rho, 0, z) <= r for an array of rho < r (bisection;
    the distance is increasing in |z|)."""
    rho = np.asarray(rho, dtype=float)
    lo = np.zeros_like(rho)
    hi = np.full_like(rho, r * r / TWO_PI * (1.0 + 1e-6))  # the SR ball is highest at rho = 2r/pi
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        inside = heisenberg_sr_distance(np.stack([rho, np.zeros_like(rho), mid], axis=-1)) <= r
        lo = np.where(inside, mid, lo)
        hi = np.where(inside, hi, mid)
    return 0.5 * (lo + hi)


def _sr_radius(r):
    """Largest rho with d_SR(rho, 0, 0) <= r, by root-finding on the solver."""
    return brentq(lambda x: heisenberg_sr_distance(np.array([x, 0.0, 0.0])) - r, 0.0, 2.0 * r, xtol=1e-15, rtol=1e-15)


FINSLER_NODES = 200


def finsler_linf_volume(r_grid=(2.0, 4.0, 8.0)):
    """Volume of the l-infinity Finsler ball {p exp(lam Z): p in B_SR(r), |lam| <= r}.

    Over each point of the projected disk (radius found by root-finding) the
    fibre is |z| <= z_max(rho) + r, with z_max from bisection on the exact SR
    distance; both volumes are integrated by Gauss-Legendre per radius, then
    C r^4 + D r^3 is fitted."""
    rows = []
    for r in r_grid:
        R = _sr_radius(r)
        # rho = R (1 - s^2) removes the square-root edge of z_max at rho = R
        x, w = np.polynomial.legendre.leggauss(FINSLER_NODES)
        sn = 0.5 * (x + 1.0)
        w = 0.5 * w * 2.0 * R * sn
        rho = R * (1.0 - sn * sn)
        zi = float(w @ (_sr_zmax(rho, r) * rho))
        ri = float(w @ (r * rho))
        vol_sr = TWO_PI * 2.0 * zi
        vol_f = TWO_PI * 2.0 * (zi + ri)
        rows.append({"r": float(r), "projection_radius": R, "volume_finsler": vol_f, "volume_sr": vol_sr})
    rr = np.array([row["r"] for row in rows])
    vv = np.array([row["volume_finsler"] for row in rows])
    A = np.vstack([rr**4, rr**3]).T
    (C, D), *_ = np.linalg.lstsq(A, vv, rcond=None)
    vol1 = sr_unit_ball_volume()
    summary = {"C": float(C), "D": float(D), "D_expected": TWO_PI, "D_relative_error": abs(D - TWO_PI) / TWO_PI,
               "sr_unit_ball_volume": vol1, "C_relative_error": abs(C - vol1) / vol1}
    sig = {"cubic_coefficient": summary["D_relative_error"] <= 1e-3,
           "quartic_coefficient": summary["C_relative_error"] <= 1e-6,
           "superset": all(row["volume_finsler"] > row["volume_sr"] for row in rows)}
    return ExperimentReport("finsler_linf_volume", rows, summary, None, {"r_grid": list(r_grid)}, sig)
