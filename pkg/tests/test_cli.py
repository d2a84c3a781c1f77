import csv
import json
import shutil
import subprocess
from pathlib import Path

import numpy as np
import pytest

from torus.cli import CSV_COLUMNS, verify, run
from torus.hamiltonian import load_spec, model_problem
from torus.residual import Params
from torus.solver import SolveOptions, solve_modified

MODEL = Path(__file__).resolve().parents[1] / "demos" / "data" / "model.toml"


@pytest.fixture
def unperturbed(tmp_path):
    p = tmp_path / "h0.toml"
    p.write_text(MODEL.read_text().replace("epsilon = 1e-3", "epsilon = 0.0"))
    return p


def test_solve_unperturbed_matches_seed(unperturbed, tmp_path):
    out = tmp_path / "o"
    assert run(["solve", "--input", str(unperturbed), "--out", str(out), "--alpha", "1.5", "--k", "0.4"]) == 0
    doc = json.loads((out / "solution.json").read_text())
    assert doc["converged"] and doc["m"] == pytest.approx(0.6) and doc["M"] == pytest.approx(-0.4)
    assert doc["e"] == pytest.approx(0.5 * 0.4 * 1.5**2)
    w = np.array(doc["coord"]["w"]["re"])
    K = doc["cutoff"]
    np.testing.assert_allclose(w[K], [1.5, 0.0])
    assert np.count_nonzero(w) == 1


def test_sweep_grid(tmp_path):
    out = tmp_path / "o"
    code = run(["sweep", "--input", str(MODEL), "--out", str(out), "--cutoff", "16", "--alpha-grid", "8", "--k-grid", "3"])
    assert code == 0
    with open(out / "psi_surface.csv") as fh:
        rows = list(csv.reader(fh))
    assert tuple(rows[0]) == CSV_COLUMNS
    assert len(rows) == 25
    assert all(np.isfinite([float(x) for x in r]).all() for r in rows[1:])


def test_malformed_input(tmp_path, capsys):
    bad = tmp_path / "bad.toml"
    bad.write_text("omega = [0.6\n")
    assert run(["solve", "--input", str(bad), "--out", str(tmp_path / "o")]) == 2
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert err["error"] == "config"


def test_bad_parameters_are_config_errors(tmp_path, capsys):
    assert run(["solve", "--input", str(MODEL), "--out", str(tmp_path / "o"), "--k", "2"]) == 2
    assert json.loads(capsys.readouterr().err)["error"] == "config"
    assert run(["verify", "--input", str(MODEL), "--out", str(tmp_path / "o"), "--horizon", "-1"]) == 2


def test_outputs_are_deterministic(tmp_path):
    args = ["--input", str(MODEL), "--cutoff", "12", "--alpha", "0.3", "--k", "0.2"]
    for name in ("a", "b"):
        assert run(["solve", "--out", str(tmp_path / name)] + args) == 0
        assert run(["verify", "--out", str(tmp_path / name), "--horizon", "20", "--samples", "3", "--seed", "5"] + args) == 0
    for f in ("solution.json", "verify.json"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_verify_unperturbed_torus():
    H = model_problem(0.0)
    sol = solve_modified(Params(0.7, 0.0), H, SolveOptions(cutoff=8))
    rep = verify(sol, H, horizon=100.0, samples=4, seed=1)
    assert rep.max_invariance_defect < 1e-9 and rep.conjugacy_defect < 1e-9
    assert not rep.against_modified


def test_integrator_energy_drift_on_integrable_case():
    H = model_problem(0.0)
    sol = solve_modified(Params(0.0, 0.0), H, SolveOptions(cutoff=8))
    rep = verify(sol, H, horizon=1e3, samples=4, seed=2)
    assert rep.energy_drift <= 1e-9


def test_verify_against_modified_hamiltonian_is_reported():
    H = model_problem(1e-3)
    sol = solve_modified(Params(0.5, 0.2), H, SolveOptions(cutoff=12))
    rep = verify(sol, H, horizon=5.0, samples=2)
    assert rep.against_modified and rep.max_invariance_defect < 1e-9


@pytest.mark.skipif(shutil.which("torus") is None, reason="console script not installed")
def test_console_script(tmp_path):
    res = subprocess.run(["torus", "solve", "--input", str(tmp_path / "none.toml"), "--out", str(tmp_path)],
                         capture_output=True, text=True)
    assert res.returncode == 2 and '"config"' in res.stderr
