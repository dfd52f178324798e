"""Constructive check of d(e, q exp zeta)^2 <= d(e, q)^2 + C |zeta|."""

from __future__ import annotations

from dataclasses import asdict

import numpy as np

from ..algebra import multiply
from ..controls import endpoint_step2, energy
from ..geodesics import exact_distance
from ..metrics import Budget, Infeasible, distance_upper, parallel_map, _threads
from ..perturbation import _zeta_vector, build_perturbation, verify_perturbation
from .report import ExperimentReport, row_seeds

WITNESS_GRID = 2049


def _sample(S, rng, box, zeta_max):
    a = rng.uniform(-box, box, size=S.V_basis.shape[1])
    z = rng.uniform(-box, box, size=S.algebra.m)
    zeta = rng.normal(size=S.algebra.m)
    zeta *= rng.uniform(0.0, zeta_max) / np.linalg.norm(zeta)
    return S.join_point(a, z), zeta


def ballbox_point(S, q, zeta, budget):
    """One row: witness for q, perturbation certificate and direct optimization at q exp zeta."""
    q = np.asarray(q, dtype=float)
    zvec = _zeta_vector(S, zeta)
    target = multiply(S.algebra, q, zvec)
    wit = distance_upper(S, q, budget)
    u = wit.witness.to_sampled(WITNESS_GRID, S.step)
    eu = energy(S, u)
    res = build_perturbation(S, u, zeta)
    fine = verify_perturbation(S, u, res, zeta)
    cert = eu + res.bound
    reached = endpoint_step2(S, u + res.v)
    direct = distance_upper(S, target, budget.with_(seed=budget.seed + 1))
    exact = exact_distance(S, target)
    row = {
        "q": q.tolist(),
        "zeta": np.asarray(zeta, dtype=float).tolist(),
        "zeta_norm": res.zeta_norm,
        "witness_energy": eu,
        "witness_residual": float(np.abs(endpoint_step2(S, u) - q).max()),
        "perturbed_endpoint_residual": float(np.abs(reached - target).max()),
        "bound": res.bound,
        "certificate": cert,
        "perturbed_energy": energy(S, u + res.v),
        "direct_energy": direct.upper**2,
        "exact_energy": None if exact is None else float(exact) ** 2,
        "slack": cert - direct.upper**2,
        "c_emp": (direct.upper**2 - eu) / res.zeta_norm if res.zeta_norm > 0 else 0.0,
        "certificate_pass": bool(res.certificate["pass"] and fine["pass"]),
        "fine_endpoint_residual": fine["endpoint_residual"],
        "fine_orthogonality_residual": fine["orthogonality_residual"],
    }
    row["violation"] = bool(not row["certificate_pass"] or row["slack"] < -1e-9 * max(1.0, cert)
                            or row["perturbed_energy"] > cert * (1 + 1e-9))
    return row


def ballbox_check(S, samples=200, seed=0, budget=Budget(starts=4), box=4.0, zeta_max=4.0):
    """Random (q, zeta); a row is a violation when the perturbation
    certificate fails or direct optimization exceeds energy(witness) + 4 pi K N |zeta|."""
    if S.step != 2:
        raise ValueError("ballbox_check requires a step-2 structure")
    rng = np.random.default_rng(seed)
    pts = [_sample(S, rng, box, zeta_max) for _ in range(samples)]
    seeds = row_seeds(seed, samples)

    def one(i):
        q, zeta = pts[i]
        try:
            return ballbox_point(S, q, zeta, budget.with_(seed=seeds[i], threads=1))
        except Infeasible as exc:
            return {"q": q.tolist(), "zeta": zeta.tolist(), "violation": True, "error": str(exc)}

    rows = parallel_map(one, range(samples), _threads(budget))
    ok = [r for r in rows if "error" not in r]
    summary = {
        "samples": samples,
        "violations": int(sum(r["violation"] for r in rows)),
        "infeasible": len(rows) - len(ok),
        "min_slack": float(min(r["slack"] for r in ok)) if ok else float("nan"),
        "max_c_emp": float(max(r["c_emp"] for r in ok)) if ok else float("nan"),
        "C": float(ok[0]["bound"] / ok[0]["zeta_norm"]) if ok and ok[0]["zeta_norm"] > 0 else float("nan"),
        "max_fine_endpoint_residual": float(max(r["fine_endpoint_residual"] for r in ok)) if ok else float("nan"),
    }
    cfg = {"structure": S.name, "algebra_hash": S.hash(), "samples": samples, "box": box, "zeta_max": zeta_max,
           "budget": asdict(budget), "witness_grid": WITNESS_GRID}
    return ExperimentReport("ballbox_check", rows, summary, seed, cfg, {"zero_violations": summary["violations"] == 0})
