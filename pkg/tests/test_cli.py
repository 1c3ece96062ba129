import json
import subprocess
import sys

import numpy as np
import pytest

from lkdelay import cli
from lkdelay.lkoperator import BoundaryData, SeparableKernelOperator
from lkdelay.lkoperator.sampling import random_invariant_separable, random_separable
from lkdelay.polyalg import Interval, PolyMat1

SCALAR_OP = {"n": 1, "m": 1, "r": 1.0, "degree": 0, "P": [[1.0]], "H": [[1.0]], "Gamma": [[1.0]], "S_coeffs": [[[1.0]]]}
SCALAR_PROBLEM = {"A": [[1.0]], "B": [[0.0]], "C": [[1.0]], "D": [[0.0]], "F": [[1.0]], "r": 1.0, "degree": 1}


def job(tmp_path, command, payload, **extra):
    (tmp_path / "input.json").write_text(json.dumps(payload))
    cfg = {"command": command, "input": "input.json", "out": "out", **extra}
    path = tmp_path / "job.json"
    path.write_text(json.dumps(cfg))
    return path


def read(tmp_path, name):
    return json.loads((tmp_path / "out" / name).read_text())


def test_invert_scalar_closed_form(tmp_path):
    assert cli.main(["--config", str(job(tmp_path, "invert", SCALAR_OP))]) == 0
    out = read(tmp_path, "inverse.json")
    assert out["Phat"][0][0] == pytest.approx(2.0, abs=1e-12)
    assert out["Hhat"][0][0] == pytest.approx(-1.0, abs=1e-12)
    assert out["Gammahat"][0][0] == pytest.approx(0.0, abs=1e-12)
    assert out["composition_residual"] <= 1e-9
    back = SeparableKernelOperator.from_dict(out["separable_inverse"])
    np.testing.assert_allclose(back.P, [[2.0]], atol=1e-12)


def test_check_invariance_pass_and_fail(tmp_path):
    rng = np.random.default_rng(0)
    bd = BoundaryData(np.array([[1.0, -0.5]]), np.array([[0.3]]))
    op = random_invariant_separable(bd, 1, 1.2, rng)
    payload = {"operator": op.to_dict(), "C": bd.C.tolist(), "D": bd.D.tolist()}
    assert cli.main(["--config", str(job(tmp_path, "check-invariance", payload))]) == 0
    assert read(tmp_path, "residuals.json")["invariant"] is True

    bad = random_separable(2, 1, 1, 1.2, rng)
    payload["operator"] = bad.to_dict()
    assert cli.main(["--config", str(job(tmp_path, "check-invariance", payload))]) == 1
    assert read(tmp_path, "residuals.json")["invariant"] is False


def test_malformed_inputs_exit_2(tmp_path, capsys):
    path = job(tmp_path, "invert", {**SCALAR_OP, "extra": 1})
    assert cli.main(["--config", str(path)]) == 2
    (tmp_path / "job.json").write_text(json.dumps({"command": "invert", "input": "input.json", "colour": "red"}))
    assert cli.main(["--config", str(tmp_path / "job.json")]) == 2
    (tmp_path / "job.json").write_text("{not json")
    assert cli.main(["--config", str(tmp_path / "job.json")]) == 2
    path = job(tmp_path, "invert", SCALAR_OP, overrides={"degre": 3})
    assert cli.main(["--config", str(path)]) == 2
    assert cli.main([]) == 2
    lines = [json.loads(x) for x in capsys.readouterr().err.strip().splitlines()]
    assert all(x["event"] == "error" and x["kind"] == "input" for x in lines)


def test_synthesis_problem_validation_exit_2(tmp_path):
    path = job(tmp_path, "synthesize", {**SCALAR_PROBLEM, "D": [[1.5]]})
    assert cli.main(["--config", str(path)]) == 2


def test_singular_operator_exit_1(tmp_path):
    op = {**SCALAR_OP, "P": [[0.0]], "Gamma": [[0.0]]}
    assert cli.main(["--config", str(job(tmp_path, "invert", op))]) == 1
    assert read(tmp_path, "report.json")["status"] == "singular"


def test_synthesize_and_simulate(tmp_path):
    assert cli.main(["--config", str(job(tmp_path, "synthesize", SCALAR_PROBLEM))]) == 0
    rep = read(tmp_path, "report.json")
    assert rep["status"] == "feasible" and rep["decay_ratio"] <= 0.05
    assert rep["lyapunov"]["V_min"] > 0
    for name in ("closed_loop.csv", "closed_loop.gp", "closed_loop.png", "gains.json", "certificate.json"):
        assert (tmp_path / "out" / name).stat().st_size > 0
    gains = read(tmp_path, "gains.json")

    sim_dir = tmp_path / "sim"
    sim_dir.mkdir()
    plant = {k: SCALAR_PROBLEM[k] for k in ("A", "B", "C", "D", "F", "r")}
    path = job(sim_dir, "simulate", {"plant": plant, "gains": gains, "psi": [1.0], "phi": [1.0]})
    assert cli.main(["--config", str(path), "--seed", "3"]) == 0
    summary = read(sim_dir, "summary.json")
    assert summary["decay_ratio"] <= 0.05
    header = (sim_dir / "out" / "trajectory.csv").read_text().splitlines()[0]
    assert header.startswith("t,x1")


def test_infeasible_synthesis_exit_1(tmp_path):
    path = job(tmp_path, "synthesize", {**SCALAR_PROBLEM, "F": [[0.0]]})
    assert cli.main(["--config", str(path)]) == 1
    assert read(tmp_path, "report.json")["status"] != "feasible"


def test_outputs_are_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        d.mkdir()
        assert cli.main(["--config", str(job(d, "synthesize", SCALAR_PROBLEM))]) == 0
    for name in ("gains.json", "certificate.json", "closed_loop.csv"):
        assert (a / "out" / name).read_bytes() == (b / "out" / name).read_bytes()


def test_solver_tolerance_from_environment(monkeypatch):
    monkeypatch.delenv(cli.TOL_ENV, raising=False)
    assert cli.solver_tol() == cli.DEFAULT_TOL
    monkeypatch.setenv(cli.TOL_ENV, "1e-6")
    assert cli.solver_tol() == 1e-6
    monkeypatch.setenv(cli.TOL_ENV, "-1")
    with pytest.raises(cli.BadInput):
        cli.solver_tol()


def test_self_test_reports_every_check(capsys):
    assert cli.main(["--self-test"]) == 0
    lines = [json.loads(x) for x in capsys.readouterr().err.strip().splitlines()]
    assert {x["check"] for x in lines} == {"scalar_inverse", "composition_residual", "identity_positivity", "rk4_exponential"}
    assert all(x["passed"] is True for x in lines)


def test_console_entry_point(tmp_path):
    path = job(tmp_path, "invert", SCALAR_OP)
    proc = subprocess.run([sys.executable, "-m", "lkdelay.cli", "--config", str(path)], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert json.loads(proc.stderr.splitlines()[-1])["event"] == "invert"
    proc = subprocess.run([sys.executable, "-m", "lkdelay.cli", "bogus"], capture_output=True, text=True)
    assert proc.returncode == 2


def test_job_override_keys():
    cfg = cli.JobConfig.from_dict({"command": "synthesize", "input": "p.json", "overrides": {"degree": 3}})
    assert cfg.get("degree") == 3 and cfg.seed == 0
    with pytest.raises(cli.BadInput):
        cli.JobConfig(command="fly", input=None)
    with pytest.raises(cli.BadInput):
        cli.JobConfig(command="invert")


def test_scalar_operator_payload_matches_library():
    op = SeparableKernelOperator([[1.0]], [[1.0]], [[1.0]], PolyMat1.constant([[1.0]], Interval(1.0)), 0)
    assert op.to_dict() == SCALAR_OP
