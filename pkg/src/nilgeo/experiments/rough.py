"""Scans of |d(phi p, phi q) - d(p, q)| for self-maps phi of a group."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ..algebra import Automorphism, inverse, multiply
from ..metrics import Budget
from .report import ExperimentReport, brackets, fit_slope, row_seeds, running_max

BOUNDED_GROWTH = 0.05
NOISE = 1e-6  # differences below NOISE * max(1, d) are bracket width, not signal


@dataclass(frozen=True)
class PairSample:
    """Pairs (p, p delta_s(w)) with base p uniform in [-box, box]^dim and unit
    directions w; ``horizontal`` restricts w to V (radial pairs)."""

    separations: tuple = (1, 2, 4, 6, 8, 10, 15, 20, 30, 40)
    directions: int = 6
    box: float = 2.0
    horizontal: bool = False

    def to_json(self):
        return asdict(self)


def _apply(phi, p):
    if isinstance(phi, Automorphism):
        return phi(p)
    return np.asarray(phi(np.asarray(p, dtype=float)), dtype=float)


def _direction(S, rng, horizontal):
    v = S.V_basis.shape[1]
    m = S.algebra.m
    a = rng.normal(size=v)
    a /= np.linalg.norm(a)
    if horizontal:
        return S.join_point(a, np.zeros(m))
    z = rng.normal(size=m)
    z /= np.linalg.norm(z)
    psi = rng.uniform(0.0, np.pi / 2)
    return S.join_point(np.cos(psi) * a, np.sin(psi) * z)


def rough_isometry_scan(S, phi, sample=PairSample(), seed=0, budget=Budget(starts=4), predicted_slope=None):
    """Certified brackets for |d(phi p, phi q) - d(p, q)| at growing separation.

    ``phi`` is an Automorphism or any callable on points. With
    ``predicted_slope`` the linear signature is asserted (fitted slope of the
    lower bound against d within 10%); otherwise the bounded signature is
    asserted: the running max grows by < 5% over the upper half of the
    sampled distance range, d >= max(d) / 2 (a doubling test)."""
    if S.step != 2:
        raise ValueError("rough_isometry_scan uses graded dilations (step 2)")
    alg = S.algebra
    rng = np.random.default_rng(seed)
    pairs = []
    for j in range(sample.directions):
        w = _direction(S, rng, sample.horizontal)
        base = rng.uniform(-sample.box, sample.box, size=alg.dim)
        for s in sample.separations:
            q = multiply(alg, base, S.dilate(w, float(s)))
            pairs.append((j, float(s), base, q))
    rel = np.array([multiply(alg, inverse(alg, p), q) for _, _, p, q in pairs])
    img = np.array([multiply(alg, inverse(alg, _apply(phi, p)), _apply(phi, q)) for _, _, p, q in pairs])
    seeds = row_seeds(seed, 2 * len(pairs))
    d, m1 = brackets(S, rel, budget, seeds[: len(pairs)])
    dphi, m2 = brackets(S, img, budget, seeds[len(pairs):])
    rows = []
    for (j, s, p, q), (lo, hi), (plo, phi_hi), a, b in zip(pairs, d, dphi, m1, m2):
        rows.append({
            "direction": j,
            "separation": s,
            "p": p.tolist(),
            "q": q.tolist(),
            "d_lower": lo,
            "d_upper": hi,
            "dphi_lower": plo,
            "dphi_upper": phi_hi,
            "diff_lower": max(0.0, plo - hi, lo - phi_hi),
            "diff_upper": max(phi_hi - lo, hi - plo),
            "method": a if a == b else f"{a}/{b}",
        })
    rows.sort(key=lambda r: (r["d_upper"], r["direction"]))
    summary = summarize_rough(rows)
    if predicted_slope is not None:
        summary["predicted_slope"] = predicted_slope
        summary["slope_relative_error"] = abs(summary["slope_lower"] - predicted_slope) / abs(predicted_slope)
        sig = {"linear": summary["slope_relative_error"] < 0.1}
    else:
        sig = {"bounded": summary["bounded_signature"]}
    cfg = {"structure": S.name, "algebra_hash": S.hash(), "map": getattr(phi, "__name__", type(phi).__name__),
           "sample": sample.to_json(), "budget": asdict(budget)}
    return ExperimentReport("rough_isometry_scan", rows, summary, seed, cfg, sig)


def summarize_rough(rows):
    d = np.array([r["d_upper"] for r in rows])
    lo = np.array([r["diff_lower"] for r in rows])
    hi = np.array([r["diff_upper"] for r in rows])
    hi = np.where(hi <= NOISE * np.maximum(1.0, d), 0.0, hi)
    near = d < 0.5 * d.max()
    before = float(hi[near].max()) if near.any() else float("nan")
    overall = float(hi.max())
    growth = (overall - before) / before if near.any() and before > 0 else (0.0 if overall == before else float("inf"))
    slope_lo, icpt = fit_slope(d, lo)
    slope_hi, _ = fit_slope(d, hi)
    return {
        "n_rows": len(rows),
        "max_diff_upper": overall,
        "max_diff_upper_below": before,
        "running_max_growth": float(growth),
        "bounded_signature": bool(np.isfinite(growth) and growth < BOUNDED_GROWTH),
        "slope_lower": slope_lo,
        "slope_upper": slope_hi,
        "intercept_lower": icpt,
        "running_max_upper": running_max(hi).tolist(),
    }
