"""Growth of d_inf - d on the Engel group along p_n = (0, n, 0, -sqrt(n)).

Coordinates are exponential coordinates for X1, X2, Y = [X1, X2],
Z = [X1, Y]. For a horizontal curve of the asymptotic (Carnot) structure with
planar projection (a, b) starting at 0 and with a(1) = 0, the endpoint is
(0, b(1), int a db, 1/2 int a^2 db). Reaching (0, 1, 0, -eps) therefore forces
backward motion in b while |a| > 0, which costs length of order eps^(1/3):

    d_inf(e, (0, 1, 0, -eps)) >= 1 + (2 eps / R)^(1/3),

with R = ``cusp_constant()``. Proof sketch: write a^2 = int_0^|a| 2h dh, so
-2 eps = int_0^M 2h (P(h) - N(h)) dh where P, N are the forward and backward
b-travel while |a| > h and M = max |a|. Splitting the curve into the part where
|a| > h (whose length is at least sqrt(4 (M - h)^2 + (P + N)^2)) and the rest
(length at least 1 + N - P) gives, with D = N - P and delta = length - 1,
D <= min(delta / 2, delta - 2 (M - h), (3 delta^2 - 4 (M - h)^2) / (2 delta)).
Integrating against 2h and maximizing over M gives 2 eps <= R delta^3.

On the +sqrt(n) side the cost is linear in eps and d_inf - d stays bounded;
that side is reported for comparison.
"""

from __future__ import annotations

from dataclasses import asdict

import numpy as np

from ..algebra import asymptotic_structure, load_structure
from ..metrics import Budget, Infeasible, distance_lower, distance_upper
from .report import ExperimentReport, row_seeds


def _cusp_profile(s):
    """Upper bound for D / delta at depth s = (M - h) / delta."""
    return np.minimum(np.minimum(0.5, 1.0 - 2.0 * s), (3.0 - 4.0 * s * s) / 2.0)


def cusp_constant():
    """R = max_M int_0^M 2 (M - s) g(s) ds for the profile g above (closed form).

    The maximum sits where int_0^M g = 0, i.e. M* = (1 + sqrt(3)/2) / 2."""
    x = (1.0 + np.sqrt(3.0) / 2.0) / 2.0
    head = x / 4.0 - 1.0 / 32.0
    F = lambda t: x * t - t * t / 2.0 - x * t * t + 2.0 * t**3 / 3.0
    return head + 2.0 * (F(x) - F(0.25))


def cusp_lower_bound(eps):
    """Certified lower bound for d_inf(e, (0, 1, 0, -eps)), eps >= 0."""
    return 1.0 + (2.0 * eps / cusp_constant()) ** (1.0 / 3.0)


def engel_point(n, sign=-1.0):
    return np.array([0.0, float(n), 0.0, sign * np.sqrt(n)])


def engel_gap(n_list=(16, 64, 256), budget=Budget(starts=8), seed=0, structure=None):
    """Brackets for d(e, p_n) and d_inf(e, p_n); gap_lower = d_inf lower - d upper.

    d_inf uses the dilation identity d_inf(p_n) = n d_inf(0, 1, 0, -n^(-5/2))."""
    S = structure if structure is not None else load_structure("engel_riemannian")
    Sinf = asymptotic_structure(S)
    seeds = row_seeds(seed, 4 * len(n_list))
    rows = []
    for i, n in enumerate(n_list):
        eps = n ** -2.5
        for j, sign in enumerate((-1.0, 1.0)):
            sd = seeds[4 * i + 2 * j: 4 * i + 2 * j + 2]
            p = engel_point(n, sign)
            straight = np.sqrt(n * n + n)  # the constant control exp(p)
            try:
                opt = distance_upper(S, p, budget.with_(seed=sd[0])).upper
            except Infeasible:
                opt = np.inf
            d_hi = min(straight, opt)
            d_lo = distance_lower(S, p)
            unit = np.array([0.0, 1.0, 0.0, sign * eps])
            try:
                inf_hi = n * distance_upper(Sinf, unit, budget.with_(seed=sd[1])).upper
            except Infeasible:
                inf_hi = np.inf
            inf_lo = n * (cusp_lower_bound(eps) if sign < 0 else 1.0)
            rows.append({
                "n": int(n),
                "side": "cusp" if sign < 0 else "plus",
                "target": p.tolist(),
                "d_lower": d_lo,
                "d_upper": d_hi,
                "d_straight": straight,
                "d_optimized": opt,
                "dinf_lower": inf_lo,
                "dinf_upper": inf_hi,
                "gap_lower": inf_lo - d_hi,
                "gap_upper": inf_hi - d_lo,
            })
    cusp = [r for r in rows if r["side"] == "cusp"]
    g = [r["gap_lower"] for r in cusp]
    summary = {
        "cusp_constant": cusp_constant(),
        "gap_lower": g,
        "increasing": bool(all(b > a for a, b in zip(g, g[1:]))),
        "positive_at_last": bool(g[-1] > 0),
        "straight_line_ok": bool(all(r["d_upper"] <= r["n"] + 0.5 for r in rows)),
        "brackets_consistent": bool(all(r["dinf_upper"] >= r["dinf_lower"] * (1 - 1e-9) for r in rows)),
        "plus_side_gap_upper": [r["gap_upper"] for r in rows if r["side"] == "plus"],
    }
    sig = {k: summary[k] for k in ("increasing", "positive_at_last", "straight_line_ok", "brackets_consistent")}
    cfg = {"structure": S.name, "algebra_hash": S.hash(), "n_list": list(n_list), "budget": asdict(budget)}
    return ExperimentReport("engel_gap", rows, summary, seed, cfg, sig)
