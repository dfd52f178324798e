import json
import subprocess
import sys

import numpy as np
import pytest

from nilgeo import __version__, cli
from nilgeo.algebra import load_structure
from nilgeo.metrics import Infeasible


def run_json(capsys, *argv):
    code = cli.run(list(argv))
    out = capsys.readouterr().out
    return code, (json.loads(out) if out.strip() else None)


def test_validate_bundled(capsys):
    code, d = run_json(capsys, "validate-algebra", "heisenberg.json")
    assert code == 0 and d["valid"] and d["Q"] == 4
    assert d["version"] == __version__ and d["algebra_hash"] == load_structure("heisenberg").hash()
    assert d["config"]["command"] == "validate-algebra"


def test_validate_reports_errors(tmp_path, capsys):
    p = tmp_path / "bad.json"
    p.write_text(json.dumps({"dim": 3, "step": 2, "brackets": [{"i": 0, "j": 1, "coeffs": {"2": 1}},
                                                              {"i": 1, "j": 2, "coeffs": {"0": 1}}]}))
    assert cli.run(["validate-algebra", str(p)]) == 1
    assert "nilpotent" in capsys.readouterr().err
    assert cli.run(["validate-algebra", str(tmp_path / "missing.json")]) == 1


def test_distance_exact(capsys):
    code, d = run_json(capsys, "distance", "--algebra", "heisenberg.json", "--target", "0,0,1")
    assert code == 0
    assert d["upper"] == pytest.approx(2 * np.sqrt(np.pi), rel=1e-8)
    assert d["config"]["target"] == [0.0, 0.0, 1.0]


def test_distance_optimizer_and_out(tmp_path, capsys):
    out = tmp_path / "d.json"
    code = cli.run(["distance", "--algebra", "free23", "--target", "0,0,0,1,0,0", "--starts", "2", "--modes", "8",
                    "--seed", "3", "--out", str(out)])
    d = json.loads(out.read_text())
    assert code == 0 and d["upper"] == pytest.approx(2 * np.sqrt(np.pi), rel=1e-4)
    assert d["config"]["modes"] == 8 and d["config"]["seed"] == 3


def test_distance_argument_errors(capsys):
    assert cli.run(["distance", "--algebra", "heisenberg", "--target", "0,1"]) == 1
    assert cli.run(["distance", "--algebra", "heisenberg", "--target", "a,b,c"]) == 1
    assert cli.run(["distance", "--algebra", "heisenberg", "--target", "0,0,1", "--grid", "100"]) == 1


def test_infeasible_exit_code(monkeypatch, capsys):
    def boom(*a, **k):
        raise Infeasible("no feasible control found", 0.5)
    monkeypatch.setattr(cli, "distance", boom)
    assert cli.run(["distance", "--algebra", "heisenberg", "--target", "1,0,0"]) == 2
    assert "infeasible" in capsys.readouterr().err


def test_endpoint_sampled_and_fourier(tmp_path, capsys):
    t = np.linspace(0, 1, 129)
    p = tmp_path / "u.json"
    p.write_text(json.dumps({"grid": 129, "values": np.c_[np.cos(2 * np.pi * t), np.sin(2 * np.pi * t)].tolist()}))
    code, d = run_json(capsys, "endpoint", "--algebra", "heisenberg", "--control", str(p))
    assert code == 0 and d["endpoint_step2"][2] == pytest.approx(1 / (4 * np.pi), abs=1e-7)
    f = tmp_path / "f.json"
    f.write_text(json.dumps({"fourier": {"1": [[1, 0], [0, -1]]}}))
    code, d = run_json(capsys, "endpoint", "--algebra", "heisenberg", "--control", str(f))
    assert code == 0
    assert np.allclose(d["fourier_closed_form"]["endpoint"], d["endpoint_product"], atol=1e-10)
    f.write_text(json.dumps({"fourier": {"1": [[1, 0], [0, 1]], "-1": [[0, 0], [1, 0]]}}))
    assert cli.run(["endpoint", "--algebra", "heisenberg", "--control", str(f)]) == 1
    f.write_text(json.dumps({"fourier": {"1": [[1, 0]]}}))
    assert cli.run(["endpoint", "--algebra", "heisenberg", "--control", str(f)]) == 1


def test_perturb(capsys):
    code, d = run_json(capsys, "perturb", "--algebra", "heisenberg_riemannian", "--zeta", "0,0,1.5", "--grid", "513")
    assert code == 0 and d["certificate"]["pass"] and d["fine_certificate"]["pass"]
    assert d["K"] == 1.0 and d["N"] == 3 and d["nullspace_choice"]
    code, d = run_json(capsys, "perturb", "--algebra", "free23", "--zeta", "1,-1,2", "--target", "1,0,0,0,0,0",
                       "--starts", "2")
    assert code == 0 and d["N"] == 15
    assert cli.run(["perturb", "--algebra", "engel_riemannian", "--zeta", "1,1"]) == 1


def test_experiment_gap_scan(tmp_path, capsys):
    csv_path = tmp_path / "rows.csv"
    code, d = run_json(capsys, "experiment", "gap_scan", "--algebra", "heisenberg_riemannian.json", "--seed", "7",
                       "--csv", str(csv_path))
    assert code == 0 and d["passed"] and d["seed"] == 7
    assert d["algebra_hash"] == load_structure("heisenberg_riemannian").hash()
    assert csv_path.read_text().startswith("kind,")


def test_experiment_configs(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"map": "stretch", "factor": 2.0, "sample": {"horizontal": True, "directions": 3}}))
    code, d = run_json(capsys, "experiment", "rough_isometry_scan", "--algebra", "heisenberg_riemannian",
                       "--config", str(cfg))
    assert code == 0 and d["signatures"] == {"linear": True}
    code, d = run_json(capsys, "experiment", "heisenberg_volume")
    assert code == 0 and d["algebra_hash"] is None
    cfg.write_text(json.dumps({"bogus": 1}))
    assert cli.run(["experiment", "finsler_linf_volume", "--config", str(cfg)]) == 1
    assert cli.run(["experiment", "gap_scan"]) == 1


def test_failed_signature_exit_code(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    # the identity does not grow linearly, so asserting slope 1 must fail
    cfg.write_text(json.dumps({"map": "identity", "predicted_slope": 1.0, "sample": {"directions": 2}}))
    code, d = run_json(capsys, "experiment", "rough_isometry_scan", "--algebra", "heisenberg_riemannian",
                       "--config", str(cfg))
    assert code == 1 and d["signatures"] == {"linear": False} and not d["passed"]
    cfg.write_text(json.dumps({"map": "shear", "to": 1, "from": 1}))
    assert cli.run(["experiment", "rough_isometry_scan", "--algebra", "hxr_riemannian", "--config", str(cfg)]) == 1
    cfg.write_text(json.dumps({"map": "shear"}))
    code, d = run_json(capsys, "experiment", "rough_isometry_scan", "--algebra", "hxr_riemannian", "--config", str(cfg))
    assert code == 0 and d["signatures"] == {"bounded": True}


def test_volume(capsys):
    code, d = run_json(capsys, "volume", "--algebra", "heisenberg_riemannian", "--r", "3", "--samples", "4000")
    assert code == 0
    mc = d["monte_carlo"]
    assert abs(mc["estimate"] - d["exact"]) <= 3 * mc["combined_sigma"]


def test_console_script():
    out = subprocess.run([sys.executable, "-m", "nilgeo.cli", "--version"], capture_output=True, text=True)
    assert out.returncode == 0 and __version__ in out.stdout
