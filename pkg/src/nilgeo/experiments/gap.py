"""Squared-distance gap between a structure and a comparison structure.

By default the comparison is the asymptotic structure (the metric restricted
to V), and the gap d_inf^2 - d^2 stays bounded. Passing a comparison with a
different abelianization norm gives the control experiment where the gap
grows quadratically.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ..algebra import SubRiemannianStructure, asymptotic_structure
from ..metrics import Budget
from .report import ExperimentReport, brackets, fit_slope, row_seeds, running_max

BOUNDED_SCALE = 10.0
BOUNDED_GROWTH = 0.05


@dataclass(frozen=True)
class GapSample:
    """Targets delta_c(p0) with d_cmp = scale exactly, for directions p0.

    Grid directions join cos(psi) times the first V basis vector with
    sin(psi) times a unit central vector, psi on an inclusive grid over
    [0, pi/2] (so the vertical axis is included). Random directions draw the
    V part from a Gaussian and psi uniformly."""

    scales: tuple = (2, 3, 4, 5, 6, 7, 8, 9, 10, 12, 14, 17, 20, 25, 30, 35, 40)
    angles: int = 7
    random: int = 8

    def to_json(self):
        return asdict(self)


def mismatched_structure(S, axis=0, factor=2.0):
    """Copy of S whose metric gives horizontal basis vector ``axis`` ``factor``
    times its length."""
    scale = np.ones(S.k)
    scale[axis] = factor
    metric = S.metric * np.outer(scale, scale)
    return SubRiemannianStructure(S.algebra, S.horizontal, metric, name=f"{S.name}-mismatched")


def _directions(S, sample, rng):
    v = S.V_basis.shape[1]
    m = S.algebra.m
    out = []
    for psi in np.linspace(0.0, np.pi / 2, sample.angles):
        a = np.zeros(v)
        a[0] = np.cos(psi)
        z = np.zeros(m)
        z[0] = np.sin(psi)
        out.append(("grid", S.join_point(a, z)))
    for _ in range(sample.random):
        a = rng.normal(size=v)
        a /= np.linalg.norm(a)
        z = rng.normal(size=m)
        z /= np.linalg.norm(z)
        psi = rng.uniform(0.0, np.pi / 2)
        out.append(("random", S.join_point(np.cos(psi) * a, np.sin(psi) * z)))
    return out


def gap_scan(S, sample=GapSample(), seed=0, compare=None, budget=Budget(starts=4)):
    """Certified intervals for d_cmp^2 - d^2 along growing scales.

    d_cmp defaults to the asymptotic distance. The comparison structure must
    be graded (Carnot on V + [g,g]), so its bracket at delta_c p0 is c times
    the bracket at p0."""
    if S.step != 2:
        raise ValueError("gap_scan requires a step-2 structure")
    cmp = asymptotic_structure(S) if compare is None else compare
    if not cmp.is_carnot:
        raise ValueError("the comparison structure must be Carnot (graded dilations)")
    rng = np.random.default_rng(seed)
    dirs = _directions(cmp, sample, rng)
    d0, _ = brackets(cmp, np.array([p for _, p in dirs]), budget, row_seeds(seed, len(dirs)))
    targets, meta = [], []
    for j, ((kind, p0), (lo0, hi0)) in enumerate(zip(dirs, d0)):
        mid = 0.5 * (lo0 + hi0)
        for lam in sample.scales:
            c = lam / mid
            targets.append(cmp.dilate(p0, c))
            meta.append((kind, j, float(lam), c * lo0, c * hi0))
    targets = np.array(targets)
    d, methods = brackets(S, targets, budget, row_seeds(seed + 1, len(targets)))
    rows = []
    for (kind, j, lam, clo, chi), (lo, hi), tgt, meth in zip(meta, d, targets, methods):
        rows.append({
            "kind": kind,
            "direction": j,
            "scale": lam,
            "target": tgt.tolist(),
            "d_lower": lo,
            "d_upper": hi,
            "dcmp_lower": clo,
            "dcmp_upper": chi,
            "gap_lower": clo * clo - hi * hi,
            "gap_upper": chi * chi - lo * lo,
            "product": (chi - lo) * hi,
            "method": meth,
        })
    rows.sort(key=lambda r: (r["d_upper"], r["scale"]))
    summary = summarize_gap(rows)
    cfg = {"structure": S.name, "algebra_hash": S.hash(), "compare": cmp.name, "compare_hash": cmp.hash(),
           "sample": sample.to_json(), "budget": asdict(budget)}
    if compare is not None:
        sig = {"superlinear": summary["superlinear"]}
    elif S.is_carnot:
        sig = {"contains_zero": summary["contains_zero"], "monotone": summary["monotone_ok"]}
    else:
        sig = {"bounded": summary["bounded_signature"], "nonvanishing": summary["nonvanishing"],
               "monotone": summary["monotone_ok"]}
    return ExperimentReport("gap_scan", rows, summary, seed, cfg, sig)


def summarize_gap(rows):
    """Summary statistics recomputed from the rows alone."""
    d = np.array([r["d_upper"] for r in rows])
    glo = np.array([r["gap_lower"] for r in rows])
    ghi = np.array([r["gap_upper"] for r in rows])
    near = d < BOUNDED_SCALE
    far = ~near
    rm_hi = running_max(ghi)
    before = float(ghi[near].max()) if near.any() else float("nan")
    overall = float(ghi.max())
    growth = (overall - before) / abs(before) if near.any() and before != 0 else float("inf")
    # log-log slope of the certified lower gap per direction, far rows only
    dirs = np.array([r["direction"] for r in rows])
    slopes = {}
    for j in np.unique(dirs):
        pos = far & (glo > 0) & (dirs == j)
        if pos.sum() >= 2:
            slopes[int(j)] = fit_slope(np.log(d[pos]), np.log(glo[pos]))[0]
    slope = min(slopes.values()) if slopes else float("nan")
    return {
        "n_rows": len(rows),
        "max_gap_upper": overall,
        "max_gap_lower": float(glo.max()),
        "max_gap_upper_below_scale": before,
        "running_max_growth_beyond_scale": float(growth),
        "bounded_signature": bool(np.isfinite(growth) and growth < BOUNDED_GROWTH),
        "far_max_gap_lower": float(glo[far].max()) if far.any() else float("nan"),
        "nonvanishing": bool(far.any() and glo[far].max() > 0),
        "far_loglog_slopes": slopes,
        "min_far_loglog_slope": slope,
        "superlinear": bool(len(slopes) == len(np.unique(dirs)) and slope > 1.0),
        "fitted_C": overall,
        "max_product_far": float(max(r["product"] for r, f in zip(rows, far) if f)) if far.any() else float("nan"),
        "contains_zero": bool(np.all((glo <= 0) & (ghi >= 0))),
        "monotone_ok": bool(all(r["dcmp_upper"] >= r["d_lower"] * (1 - 1e-9) for r in rows)),
        "running_max_upper": rm_hi.tolist(),
    }
