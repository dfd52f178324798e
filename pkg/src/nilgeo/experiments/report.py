"""Report container and helpers shared by the experiments."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .. import __version__
from ..metrics import Budget, DistanceEstimate, Infeasible, distance, distance_lower, exact_estimate, parallel_map, _threads
from ..geodesics import exact_distance


def _plain(x):
    """JSON-friendly copy of numpy scalars and arrays."""
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, np.ndarray):
        return _plain(x.tolist())
    if isinstance(x, np.bool_):
        return bool(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.floating):
        return float(x)
    return x


@dataclass
class ExperimentReport:
    """Rows of per-sample records plus a summary recomputable from them.

    ``signatures`` holds the asserted pass/fail checks; ``passed`` is their conjunction."""

    name: str
    rows: list
    summary: dict
    seed: int | None
    config: dict
    signatures: dict = field(default_factory=dict)

    @property
    def passed(self):
        return all(bool(v) for v in self.signatures.values())

    def to_json(self):
        return _plain({
            "experiment": self.name,
            "version": __version__,
            "seed": self.seed,
            "config": self.config,
            "summary": self.summary,
            "signatures": self.signatures,
            "passed": self.passed,
            "rows": self.rows,
        })

    def dump(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=2, sort_keys=True)

    def write_csv(self, path):
        cols = []
        for r in self.rows:
            for k in r:
                if k not in cols:
                    cols.append(k)
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=cols)
            w.writeheader()
            for r in self.rows:
                w.writerow({k: json.dumps(_plain(v)) if isinstance(v, (list, tuple, np.ndarray, dict)) else _plain(v)
                            for k, v in r.items()})


def row_seeds(seed, n):
    """Independent per-row integer seeds derived from one experiment seed."""
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(n)]


def brackets(S, points, budget=None, seeds=None):
    """Distance brackets from the identity, shape (n, 2), plus the method per row.

    Exact oracles are vectorized; otherwise each point runs the optimizer with
    its own seed. Infeasible points get the upper bound +inf."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    exact = exact_distance(S, points)
    if exact is not None:
        out = np.array([_interval(exact_estimate(S, p, v)) for p, v in zip(points, exact)])
        return out, ["exact"] * len(points)
    budget = budget or Budget(starts=4)
    seeds = seeds if seeds is not None else [budget.seed] * len(points)

    def one(i):
        try:
            est = distance(S, points[i], budget.with_(seed=seeds[i], threads=1))
            return _interval(est), "+".join(est.methods)
        except Infeasible:
            return (distance_lower(S, points[i]), np.inf), "infeasible"

    res = parallel_map(one, range(len(points)), _threads(budget))
    return np.array([r[0] for r in res], dtype=float).reshape(-1, 2), [r[1] for r in res]


def _interval(est: DistanceEstimate):
    return (float(est.lower), float(est.upper))


def running_max(values):
    return np.maximum.accumulate(np.asarray(values, dtype=float))


def fit_slope(x, y):
    """Least-squares slope and intercept of y against x."""
    A = np.vstack([x, np.ones_like(x)]).T
    (a, b), *_ = np.linalg.lstsq(A, y, rcond=None)
    return float(a), float(b)
