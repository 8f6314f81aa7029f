import json
from pathlib import Path

import numpy as np
import pytest

from wolffkit.cli import main
from wolffkit.grids import Domain
from wolffkit.measures import Measure, save_measure


@pytest.fixture
def workspace(tmp_path):
    dom = Domain((-1,) * 3, (1,) * 3, (8,) * 3)
    mu = Measure(dom, np.array([[0.25, 0.0, 0.0]]), np.array([1.0]))
    measure_path = tmp_path / "mu.json"
    save_measure(measure_path, mu)
    grid_path = tmp_path / "grid.json"
    grid_path.write_text(json.dumps(dom.to_json()))
    return tmp_path, measure_path, grid_path


def test_wolff_command_writes_field_and_manifest(workspace):
    tmp, measure, grid = workspace
    out = tmp / "wolff.csv"
    rc = main(["wolff", "--measure", str(measure), "--alpha", "1.0", "--p", "2.0",
               "--R", "2.0", "--grid", str(grid), "--out", str(out)])
    assert rc == 0
    rows = np.loadtxt(out, delimiter=",", skiprows=1)
    assert rows.shape == (8**3, 4)
    manifest = json.loads((tmp / "wolff.csv.manifest.json").read_text())
    assert manifest["schema"] == "wolffkit/1"
    assert str(measure) in manifest["inputs"]
    assert manifest["wall_time_s"] > 0


def test_wolff_command_rejects_bad_alpha(workspace):
    tmp, measure, grid = workspace
    out = tmp / "bad.csv"
    rc = main(["wolff", "--measure", str(measure), "--alpha", "2.0", "--p", "2.0",
               "--grid", str(grid), "--out", str(out)])
    assert rc == 2
    # manifest exists even on the failure path
    assert (tmp / "bad.csv.manifest.json").exists()


def test_wolff_command_accepts_inf(workspace, capsys):
    tmp, measure, grid = workspace
    out = tmp / "winf.csv"
    rc = main(["wolff", "--measure", str(measure), "--alpha", "1.0", "--p", "2.0",
               "--R", "inf", "--grid", str(grid), "--out", str(out)])
    assert rc == 0
    manifest = json.loads((tmp / "winf.csv.manifest.json").read_text())
    assert manifest["R"] == {"infinite": True, "value": None}


def test_wolff_command_missing_file(tmp_path):
    rc = main(["wolff", "--measure", str(tmp_path / "nope.json"), "--alpha", "1.0",
               "--p", "2.0", "--grid", str(tmp_path / "nope2.json"),
               "--out", str(tmp_path / "o.csv")])
    assert rc == 2


def test_wolff_reproducible_outputs(workspace):
    tmp, measure, grid = workspace
    out1, out2 = tmp / "a.csv", tmp / "b.csv"
    for out in (out1, out2):
        assert main(["wolff", "--measure", str(measure), "--alpha", "1.0", "--p", "2.0",
                     "--R", "2.0", "--grid", str(grid), "--out", str(out)]) == 0
    assert out1.read_bytes() == out2.read_bytes()


def test_solve_command(workspace):
    tmp, measure, grid = workspace
    cfg = {"p": 2.0, "domain": json.loads(Path(grid).read_text()),
           "absorption": {"kind": "power", "q": 1.5},
           "ladder_levels": 3, "bandwidth0": 0.5}
    cfg_path = tmp / "solve.json"
    cfg_path.write_text(json.dumps(cfg))
    rc = main(["solve", "--measure", str(measure), "--config", str(cfg_path),
               "--out-prefix", str(tmp / "out" / "run")])
    assert rc == 0
    report = json.loads((tmp / "out" / "run.report.json").read_text())
    assert report["converged"]
    assert (tmp / "out" / "run.u.csv").exists()
    assert (tmp / "out" / "run.manifest.json").exists()


def test_capacity_command(workspace):
    tmp, _, grid = workspace
    out = tmp / "cap.json"
    trace = tmp / "trace.csv"
    rc = main(["capacity", "--grid", str(grid), "--alpha", "2.0", "--s", "2.0",
               "--q", "2.0", "--target-lo=-0.3,-0.3,-0.3", "--target-hi", "0.3,0.3,0.3",
               "--max-iter", "400", "--out", str(out), "--trace", str(trace)])
    assert rc == 0
    obj = json.loads(out.read_text())
    assert obj["value"] > 0
    tr = np.loadtxt(trace, delimiter=",", skiprows=1)
    assert tr.shape[1] == 3


def test_verify_command_norm_equivalence(tmp_path):
    out = tmp_path / "norm.json"
    rc = main(["verify", "norm-equivalence", "--res", "16", "--count", "5",
               "--R", "1.0", "--out", str(out), "--csv", str(tmp_path / "norm.csv")])
    assert rc == 0
    rep = json.loads(out.read_text())
    assert rep["experiment"] == "norm-equivalence"
    assert rep["passed"]


def test_verify_command_levelset(tmp_path):
    out = tmp_path / "ls.json"
    rc = main(["verify", "levelset", "--res", "24", "--R", "inf",
               "--lambdas", "2.5,4.0", "--eps", "0.4,0.2,0.1", "--out", str(out)])
    assert rc == 0
    rep = json.loads(out.read_text())
    assert rep["experiment"] == "levelset-decay"


def test_verify_command_exp_integrability(tmp_path):
    out = tmp_path / "expint.json"
    rc = main(["verify", "exp-integrability", "--res", "24", "--R", "1.0",
               "--out", str(out)])
    assert rc == 0
    rep = json.loads(out.read_text())
    assert rep["passed"]
    assert all(row["average"] >= 1.0 for row in rep["table"])


def test_check_good_exponential_tiny_atom(tmp_path):
    dom = Domain((-1,) * 3, (1,) * 3, (16,) * 3)
    mu = Measure(dom, np.array([[0.11, 0.07, 0.0]]), np.array([1e-4]))
    mp = tmp_path / "nu.json"
    save_measure(mp, mu)
    out = tmp_path / "good.json"
    rc = main(["check-good", "--measure", str(mp),
               "--absorption", '{"kind":"exponential","tau":1.0,"lambda":1.0}',
               "--p", "2.0", "--ladder-levels", "3", "--out", str(out)])
    assert rc == 0
    rep = json.loads(out.read_text())
    crit = rep["criteria"][0]
    assert crit["verdict"] == "pass"
    assert rep["solve"]["converged"]


def test_check_good_supercritical_dirac(tmp_path):
    dom = Domain((-1,) * 3, (1,) * 3, (16,) * 3)
    mu = Measure(dom, np.array([[0.0, 0.0, 0.0]]), np.array([1.0]))
    mp = tmp_path / "dirac.json"
    save_measure(mp, mu)
    out = tmp_path / "bad.json"
    rc = main(["check-good", "--measure", str(mp),
               "--absorption", '{"kind":"power","q":3.0}',
               "--p", "2.0", "--ladder-levels", "4", "--out", str(out)])
    assert rc in (1, 3)


def test_check_good_rejects_bad_absorption(tmp_path, workspace):
    _, measure, _ = workspace
    rc = main(["check-good", "--measure", str(measure),
               "--absorption", '{"kind":"none"}', "--p", "2.0",
               "--out", str(tmp_path / "o.json")])
    assert rc == 2
