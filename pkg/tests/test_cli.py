import json
import subprocess
import sys
from pathlib import Path

import pytest

from mfgfinite import cli, model

ROOT = Path(__file__).resolve().parents[1]


def _write(tmp_path, cfg, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return str(path)


def _cfg(**extra):
    cfg = model.monotone_congestion_config()
    cfg["grid"] = {"n_steps": 100}
    cfg["mc"] = {"n_paths": 500, "n_write": 3}
    cfg.update(extra)
    return cfg


def test_solve_writes_outputs(tmp_path):
    out = tmp_path / "o"
    assert cli.run(["solve", "--config", _write(tmp_path, _cfg()), "--out", str(out)]) == 0
    info = json.loads((out / "solve.json").read_text())
    assert info["converged"] and info["residual"] < 1e-6
    for name in ("equilibrium.csv", "value.csv", "trace.csv", "manifest.json"):
        assert (out / name).exists()
    header = (out / "equilibrium.csv").read_text().splitlines()[0]
    assert header == "t,p_1,p_2,alpha_1,alpha_2"
    man = json.loads((out / "manifest.json").read_text())
    assert man["seed"] == 11 and "config_sha256" in man


def test_reruns_are_byte_identical(tmp_path):
    path = _write(tmp_path, _cfg())
    for d in ("a", "b"):
        assert cli.run(["simulate", "--config", path, "--out", str(tmp_path / d)]) == 0
    for name in ("paths.csv", "marginals.csv", "simulate.json", "manifest.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_missing_field_names_it(tmp_path, capsys):
    cfg = _cfg()
    del cfg["m"]
    assert cli.run(["solve", "--config", _write(tmp_path, cfg), "--out", str(tmp_path / "o")]) == 1
    assert "m" in capsys.readouterr().err


def test_bad_json_reports_location(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text('{"m": 2,\n "T": }')
    assert cli.run(["solve", "--config", str(path), "--out", str(tmp_path / "o")]) == 1
    assert "line 2" in capsys.readouterr().err


def test_non_convergence_exit_code(tmp_path):
    cfg = _cfg(solver={"damping": 0.5, "tol": 1e-6, "max_iter": 1})
    out = tmp_path / "o"
    assert cli.run(["solve", "--config", _write(tmp_path, cfg), "--out", str(out)]) == 2
    assert len((out / "trace.csv").read_text().splitlines()) == 2
    assert (out / "manifest.json").exists()


def test_check_monotone_reports_failure(tmp_path):
    out = tmp_path / "o"
    code = cli.run(["check-monotone", "--config", str(ROOT / "configs" / "anti.json"), "--out", str(out)])
    assert code == 0
    assert json.loads((out / "monotone.json").read_text())["g_monotone"] is False


def test_likelihood_check(tmp_path):
    cfg = _cfg(likelihood={"rates": [[0, 2], [2, 0]], "p0": [1, 0], "t": 1.0, "n_steps": 100})
    cfg["mc"]["n_paths"] = 20000
    out = tmp_path / "o"
    assert cli.run(["likelihood-check", "--config", _write(tmp_path, cfg), "--out", str(out)]) == 0
    assert json.loads((out / "likelihood.json").read_text())["passed"]


def test_module_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "mfgfinite", "check-monotone", "--config",
                        str(ROOT / "configs" / "monotone2.json"), "--out", str(tmp_path / "o")],
                       capture_output=True, text=True)
    assert r.returncode == 0, r.stderr
