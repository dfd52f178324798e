"""Command-line entry point ``nilgeo``.

Exit codes: 0 on success (for experiments and certificates: all asserted
signatures pass), 1 on validation errors or failed signatures, 2 when the
solver finds no feasible control.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict, dataclass, field

import numpy as np

from . import __version__
from .algebra import Automorphism, ValidationError, asymptotic_structure, load_structure
from .controls import (
    DEFAULT_GRID,
    FourierControl,
    SampledControl,
    control_from_json,
    endpoint_product,
    endpoint_step2,
    energy,
    fourier_endpoint_complex,
    fourier_real_endpoint,
    fourier_to_sampled,
    resample,
)
from .experiments import (
    GapSample,
    PairSample,
    ballbox_check,
    engel_gap,
    finsler_linf_volume,
    gap_scan,
    heisenberg_ball_volume,
    heisenberg_volume,
    mc_ball_volume,
    mismatched_structure,
    rough_isometry_scan,
)
from .experiments.report import _plain
from .geodesics import heisenberg_reduction
from .metrics import Budget, Infeasible, distance, distance_upper, geodesic_witness_control
from .perturbation import SolverDegenerate, build_perturbation, verify_perturbation

EXPERIMENTS = ("gap_scan", "ballbox_check", "heisenberg_volume", "mc_ball_volume", "finsler_linf_volume",
               "engel_gap", "rough_isometry_scan")


@dataclass
class CliConfig:
    command: str
    algebra_path: str | None = None
    target: list | None = None
    zeta: list | None = None
    control_path: str | None = None
    experiment: str | None = None
    grid: int = DEFAULT_GRID
    modes: int = 12
    starts: int = 16
    samples: int | None = None
    radius: float | None = None
    seed: int = 0
    asymptotic: bool = False
    out: str | None = None
    csv: str | None = None
    config: dict = field(default_factory=dict)

    def validate(self):
        if self.grid < 3 or self.grid % 2 == 0:
            raise ValidationError("--grid must be odd and at least 3")
        if self.modes < 1:
            raise ValidationError("--modes must be positive")
        if self.starts < 1:
            raise ValidationError("--starts must be positive")
        if self.samples is not None and self.samples < 1:
            raise ValidationError("--samples must be positive")
        if self.radius is not None and self.radius <= 0:
            raise ValidationError("--r must be positive")
        if self.experiment is not None and self.experiment not in EXPERIMENTS:
            raise ValidationError(f"unknown experiment {self.experiment!r}; choose from {', '.join(EXPERIMENTS)}")

    def budget(self):
        return Budget(n_max=self.modes, starts=self.starts, seed=self.seed)


def _vector(text):
    try:
        return [float(x) for x in text.split(",")]
    except ValueError as exc:
        raise ValidationError(f"cannot parse vector {text!r}: {exc}") from exc


def _parser():
    p = argparse.ArgumentParser(prog="nilgeo", description="Distances and experiments on nilpotent Lie groups.")
    p.add_argument("--version", action="version", version=f"nilgeo {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, algebra=True):
        if algebra:
            sp.add_argument("--algebra", required=True, help="spec JSON path or bundled spec name")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--grid", type=int, default=DEFAULT_GRID, help="odd sample count for controls")
        sp.add_argument("--modes", type=int, default=12, help="basis degree of the optimizer")
        sp.add_argument("--starts", type=int, default=16, help="optimizer multistarts")
        sp.add_argument("--out", help="write the JSON result here (default: stdout)")

    v = sub.add_parser("validate-algebra", help="validate a spec file")
    v.add_argument("spec")
    v.add_argument("--out")

    e = sub.add_parser("endpoint", help="endpoint and energy of a control")
    common(e)
    e.add_argument("--control", required=True, help="control JSON (sampled values or Fourier coefficients)")

    d = sub.add_parser("distance", help="distance bracket from the identity")
    common(d)
    d.add_argument("--target", required=True, help="comma-separated exponential coordinates")
    d.add_argument("--asymptotic", action="store_true", help="use the metric restricted to V")

    q = sub.add_parser("perturb", help="vertical perturbation of a control and its certificate")
    common(q)
    q.add_argument("--zeta", required=True, help="comma-separated vertical vector (derived or full coordinates)")
    g = q.add_mutually_exclusive_group()
    g.add_argument("--control", help="control JSON; default is the zero control")
    g.add_argument("--target", help="use the optimizer witness for this target as the control")

    x = sub.add_parser("experiment", help="run an experiment")
    x.add_argument("name", choices=EXPERIMENTS)
    common(x)
    x.set_defaults(algebra=None)
    for a in x._actions:
        if a.dest == "algebra":
            a.required = False
    x.add_argument("--config", help="JSON file with experiment parameters")
    x.add_argument("--samples", type=int)
    x.add_argument("--csv", help="write the rows as CSV")

    w = sub.add_parser("volume", help="Monte Carlo ball volume")
    common(w)
    w.add_argument("--r", type=float, required=True, dest="radius")
    w.add_argument("--samples", type=int, default=20000)
    w.add_argument("--csv")
    return p


def _config(ns):
    cfg = {}
    if getattr(ns, "config", None):
        try:
            with open(ns.config) as fh:
                cfg = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ValidationError(f"cannot read config {ns.config!r}: {exc}") from exc
    c = CliConfig(
        command=ns.command,
        algebra_path=getattr(ns, "algebra", None) or getattr(ns, "spec", None),
        target=_vector(ns.target) if getattr(ns, "target", None) else None,
        zeta=_vector(ns.zeta) if getattr(ns, "zeta", None) else None,
        control_path=getattr(ns, "control", None),
        experiment=getattr(ns, "name", None),
        grid=getattr(ns, "grid", DEFAULT_GRID),
        modes=getattr(ns, "modes", 12),
        starts=getattr(ns, "starts", 16),
        samples=getattr(ns, "samples", None),
        radius=getattr(ns, "radius", None),
        seed=getattr(ns, "seed", 0),
        asymptotic=getattr(ns, "asymptotic", False),
        out=getattr(ns, "out", None),
        csv=getattr(ns, "csv", None),
        config=cfg,
    )
    c.validate()
    return c


def _emit(cfg, payload, S=None):
    payload = dict(payload)
    payload["version"] = __version__
    payload["algebra_hash"] = S.hash() if S is not None else None
    payload["config"] = asdict(cfg)
    text = json.dumps(_plain(payload), indent=2, sort_keys=True)
    if cfg.out:
        with open(cfg.out, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)


def _load_control(cfg, S):
    try:
        with open(cfg.control_path) as fh:
            d = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ValidationError(f"cannot read control {cfg.control_path!r}: {exc}") from exc
    try:
        u = control_from_json(d)
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError(f"malformed control: {exc}") from exc
    k = S.k
    if isinstance(u, FourierControl):
        if any(len(c) != k for c in u.coefficients.values()):
            raise ValidationError(f"Fourier coefficients must have {k} components")
        return u
    if u.k != k:
        raise ValidationError(f"control has {u.k} components, the structure has {k}")
    return u


def _fourier_closed_form(S, u):
    """Closed-form endpoint: real form for positive support, complex form otherwise."""
    if min(u.support) > 0:
        return fourier_real_endpoint(S, u)
    try:
        end, en = fourier_endpoint_complex(S, u)
    except ValueError as exc:
        raise ValidationError(str(exc)) from exc
    if np.abs(end.imag).max() > 1e-12:
        raise ValidationError("complex Fourier coefficients must be conjugate-symmetric for a real control")
    return end.real, en


def _fourier_sampled(u, grid):
    """Real sampled control of a Fourier control (sum Re(c_n f_n) for positive support)."""
    if min(u.support) > 0:
        return fourier_to_sampled(u, grid)
    v = fourier_to_sampled(u, grid, complex_form=True)
    if np.abs(v.values.imag).max() > 1e-12:
        raise ValidationError("complex Fourier coefficients must be conjugate-symmetric for a real control")
    return SampledControl(v.values.real)


def cmd_validate(cfg):
    S = load_structure(cfg.algebra_path)
    _emit(cfg, {"valid": True, "dim": S.dim, "step": S.step, "rank": S.k, "derived_dim": S.algebra.m,
                "carnot": S.is_carnot, "Q": S.Q if S.step == 2 else None}, S)
    return 0


def cmd_endpoint(cfg):
    S = load_structure(cfg.algebra_path)
    u = _load_control(cfg, S)
    out = {}
    if isinstance(u, FourierControl):
        if S.step == 2:
            end, en = _fourier_closed_form(S, u)
            out["fourier_closed_form"] = {"endpoint": end.tolist(), "energy": en}
        u = _fourier_sampled(u, cfg.grid)
    elif u.N != cfg.grid and not u.breaks:
        u = resample(u, cfg.grid)
    out["endpoint_product"] = endpoint_product(S, u).tolist()
    if S.step == 2:
        out["endpoint_step2"] = endpoint_step2(S, u).tolist()
    out["energy"] = energy(S, u)
    _emit(cfg, out, S)
    return 0


def cmd_distance(cfg):
    S = load_structure(cfg.algebra_path)
    if len(cfg.target) != S.dim:
        raise ValidationError(f"--target needs {S.dim} coordinates")
    T = asymptotic_structure(S) if cfg.asymptotic else S
    est = distance(T, np.array(cfg.target), cfg.budget())
    _emit(cfg, est.to_json(), S)
    return 0


def cmd_perturb(cfg):
    S = load_structure(cfg.algebra_path)
    if S.step != 2:
        raise ValidationError("perturbations need a step-2 structure")
    if cfg.control_path:
        u = _load_control(cfg, S)
        if isinstance(u, FourierControl):
            u = _fourier_sampled(u, cfg.grid)
        elif u.N != cfg.grid:
            u = resample(u, cfg.grid)
    elif cfg.target:
        if len(cfg.target) != S.dim:
            raise ValidationError(f"--target needs {S.dim} coordinates")
        est = distance_upper(S, np.array(cfg.target), cfg.budget())
        u = geodesic_witness_control(S, est.witness, cfg.grid)
    else:
        u = SampledControl(np.zeros((cfg.grid, S.k)))
    try:
        res = build_perturbation(S, u, np.array(cfg.zeta))
    except (ValueError, SolverDegenerate) as exc:
        raise ValidationError(str(exc)) from exc
    fine = verify_perturbation(S, u, res, np.array(cfg.zeta))
    payload = res.to_json()
    payload["fine_certificate"] = fine
    _emit(cfg, payload, S)
    return 0 if res.certificate["pass"] and fine["pass"] else 1


def _experiment(cfg):
    name = cfg.experiment
    c = dict(cfg.config)
    budget = Budget(n_max=cfg.modes, starts=c.pop("starts", min(cfg.starts, 4)), seed=cfg.seed)
    S = load_structure(cfg.algebra_path) if cfg.algebra_path else None

    def need():
        if S is None:
            raise ValidationError(f"experiment {name} needs --algebra")
        return S

    if name == "gap_scan":
        sample = GapSample(**{k: tuple(v) if isinstance(v, list) else v for k, v in c.pop("sample", {}).items()})
        compare = None
        if c.pop("compare", None) == "mismatched":
            compare = asymptotic_structure(mismatched_structure(need(), c.pop("axis", 0), c.pop("factor", 2.0)))
        return gap_scan(need(), sample, cfg.seed, compare, budget), S
    if name == "ballbox_check":
        return ballbox_check(need(), cfg.samples or c.pop("samples", 200), cfg.seed, budget, **c), S
    if name == "heisenberg_volume":
        return heisenberg_volume(**{k: tuple(v) for k, v in c.items()}), S
    if name == "mc_ball_volume":
        r = c.pop("r", cfg.radius or 8.0)
        return mc_ball_volume(need(), r, cfg.samples or c.pop("samples", 20000), cfg.seed, budget), S
    if name == "finsler_linf_volume":
        return finsler_linf_volume(**{k: tuple(v) for k, v in c.items()}), S
    if name == "engel_gap":
        n_list = tuple(c.pop("n_list", (16, 64, 256)))
        return engel_gap(n_list, budget.with_(starts=c.pop("starts", 8)), cfg.seed, S), S
    if name == "rough_isometry_scan":
        T = need()
        kind = c.pop("map", "identity")
        n = T.dim
        if kind == "identity":
            phi, slope = Automorphism(T.algebra, np.eye(n)), None
        elif kind == "shear":
            # default: the last abelian coordinate feeds the first derived one
            to = c.pop("to", T.algebra.derived_indices[0])
            frm = c.pop("from", T.algebra.abelian_indices[-1])
            if to == frm:
                raise ValidationError("a shear needs distinct 'to' and 'from' coordinates")
            M = np.eye(n)
            M[to, frm] += c.pop("amount", 1.0)
            phi, slope = Automorphism(T.algebra, M), None
        elif kind == "stretch":
            f = float(c.pop("factor", 2.0))
            M = np.diag([f if i in T.algebra.abelian_indices else f * f for i in range(n)])
            phi, slope = Automorphism(T.algebra, M), f - 1.0
        else:
            raise ValidationError(f"unknown map {kind!r}; use identity, shear or stretch")
        slope = c.pop("predicted_slope", slope)
        sample = PairSample(**{k: tuple(v) if isinstance(v, list) else v for k, v in c.pop("sample", {}).items()})
        return rough_isometry_scan(T, phi, sample, cfg.seed, budget, slope), T
    raise ValidationError(f"unknown experiment {name!r}")


def cmd_experiment(cfg):
    try:
        report, S = _experiment(cfg)
    except TypeError as exc:
        raise ValidationError(f"bad experiment config: {exc}") from exc
    if cfg.csv:
        report.write_csv(cfg.csv)
    payload = report.to_json()
    _emit(cfg, payload, S)
    return 0 if report.passed else 1


def cmd_volume(cfg):
    S = load_structure(cfg.algebra_path)
    rep = mc_ball_volume(S, cfg.radius, cfg.samples, cfg.seed, Budget(n_max=cfg.modes, starts=min(cfg.starts, 4), seed=cfg.seed))
    if cfg.csv:
        rep.write_csv(cfg.csv)
    payload = {"monte_carlo": rep.summary, "signatures": rep.signatures}
    red = heisenberg_reduction(S)
    if red is not None and red.kernel.shape[1] == 0 and red.kappa == 1.0 and abs(red.s - 1.0) < 1e-12:
        payload["exact"] = heisenberg_ball_volume(cfg.radius)
    _emit(cfg, payload, S)
    return 0 if rep.passed else 1


COMMANDS = {
    "validate-algebra": cmd_validate,
    "endpoint": cmd_endpoint,
    "distance": cmd_distance,
    "perturb": cmd_perturb,
    "experiment": cmd_experiment,
    "volume": cmd_volume,
}


def run(argv=None):
    ns = _parser().parse_args(argv)
    try:
        cfg = _config(ns)
        return COMMANDS[cfg.command](cfg)
    except (ValidationError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Infeasible as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return 2


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
