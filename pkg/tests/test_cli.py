import csv
import json
import os
import subprocess
import sys
from pathlib import Path

import pytest

from rabiflow import cli

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

SYSTEM = """
[system]
m = 2
[system.coupling]
kind = "pairwise"
a = [1.0, 1.0]
beta = [[0.0, 1.0], [1.0, 0.0]]
b = -1.0
[discretization]
n_samples = 64
"""

SMALL_VERIFY = SYSTEM + """
[verify]
seed = 11
lemma_states = 300
gradient_states = 2
gradient_directions = 2
r_grid_points = 3
shifts = 4
[[verify.orbits]]
k = [1, 1]
"""


def write(tmp_path, text, name="cfg.toml"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_orbits_ellipsoid(tmp_path):
    out = tmp_path / "orbits.csv"
    assert cli.main(["orbits", "--config", str(CONFIGS / "ellipsoid.toml"), "--out", str(out)]) == 0
    rows = read_csv(out)
    assert list(rows[0]) == ["source", "k", "tau", "action", "h", "family_flag", "status"]
    hit = [r for r in rows if r["k"] == "1 0"]
    assert hit and all(float(r["tau"]) == 1.0 and float(r["action"]) == -1.0 for r in hit)
    assert any(r["k"] == "2 1" and r["family_flag"] == "true" for r in rows)


def test_orbits_full_precision(tmp_path):
    out = tmp_path / "orbits.csv"
    cli.main(["orbits", "--config", str(CONFIGS / "nonlinear.toml"), "--out", str(out)])
    row = next(r for r in read_csv(out) if r["k"] == "1 1")
    assert float(row["tau"]) == pytest.approx(2**-0.5, abs=1e-15)
    assert float(row["action"]) == pytest.approx(-2 * (2**0.5 - 1), abs=1e-15)


def test_orbits_empty_list(tmp_path):
    cfg = write(tmp_path, SYSTEM.replace("b = -1.0", "b = -1.0") + "\n[orbits]\nk = []\n")
    out = tmp_path / "o.csv"
    assert cli.main(["orbits", "--config", cfg, "--out", str(out)]) == 0
    assert out.read_text().splitlines() == ["source,k,tau,action,h,family_flag,status"]


def test_orbits_solver_failure_is_listed(tmp_path):
    cfg = write(tmp_path, SYSTEM + "\n[orbits]\nk = [[1, -1], [1, 1]]\n")
    out = tmp_path / "o.json"
    assert cli.main(["orbits", "--config", cfg, "--out", str(out), "--format", "json"]) == 0
    rows = json.loads(out.read_text())["orbits"]
    assert rows[0]["status"] in ("NoConvergence", "InfeasibleBranch", "SingularSystem")
    assert rows[1]["status"] == "ok"


def test_malformed_config(tmp_path, capsys):
    cfg = write(tmp_path, "[system]\nm = 2\ncutoffs = [0.0, \n")
    out = tmp_path / "o.csv"
    for cmd in ("orbits", "flow", "verify"):
        assert cli.main([cmd, "--config", cfg, "--out", str(out)]) == 2
        err = capsys.readouterr().err
        assert err.startswith(f"{cfg}:4:")
    assert not out.exists()


def test_config_errors(tmp_path):
    out = tmp_path / "o.csv"
    bad_kind = write(tmp_path, SYSTEM.replace('"pairwise"', '"cubic"'))
    assert cli.main(["orbits", "--config", bad_kind, "--out", str(out)]) == 2
    assert cli.main(["orbits", "--config", str(tmp_path / "missing.toml"), "--out", str(out)]) == 2
    bad_n = write(tmp_path, SYSTEM.replace("n_samples = 64", "n_samples = 100"), "n.toml")
    assert cli.main(["orbits", "--config", bad_n, "--out", str(out)]) == 2
    assert not out.exists()


def test_flow_zero_budget(tmp_path):
    cfg = write(tmp_path, SYSTEM + '\n[flow]\nk = [1, 1]\nperturbation = 1e-2\nmax_steps = 0\n')
    out = tmp_path / "f.csv"
    assert cli.main(["flow", "--config", cfg, "--out", str(out)]) == 0
    rows = read_csv(out)
    assert len(rows) == 1 and rows[0]["step"] == "0"
    assert cli.main(["flow", "--config", cfg, "--out", str(tmp_path / "f.json"), "--format", "json"]) == 0
    assert json.loads((tmp_path / "f.json").read_text())["termination"] == "BudgetExhausted"


def test_flow_blowup_is_a_result(tmp_path, capsys):
    cfg = write(tmp_path, SYSTEM + '\n[flow]\nk = [1, 1]\nperturbation = 1e-2\nds = 10.0\nscheme = "explicit-euler"\nmax_steps = 50\n')
    out = tmp_path / "f.json"
    assert cli.main(["flow", "--config", cfg, "--out", str(out), "--format", "json"]) == 0
    assert json.loads(out.read_text())["termination"] == "Diverged"
    assert capsys.readouterr().out.startswith("Diverged")


def test_flow_bad_scheme(tmp_path):
    cfg = write(tmp_path, SYSTEM + '\n[flow]\nk = [1, 1]\nscheme = "rk4"\n')
    assert cli.main(["flow", "--config", cfg, "--out", str(tmp_path / "f.csv")]) == 2


def test_verify_small_all(tmp_path):
    cfg = write(tmp_path, SMALL_VERIFY)
    out = tmp_path / "v.json"
    assert cli.main(["verify", "--config", cfg, "--out", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert doc["pass"] is True
    assert set(doc["suites"]) == {"gradient", "theorem-a", "invariance", "lemma"}


def test_verify_corrupted(tmp_path):
    out = tmp_path / "v.json"
    code = cli.main(["verify", "--config", str(CONFIGS / "corrupted.toml"), "--suite", "theorem-a", "--out", str(out)])
    assert code == 1
    doc = json.loads(out.read_text())
    assert doc["pass"] is False
    assert doc["suites"]["theorem-a"]["violations"]


def test_verify_csv_summary(tmp_path):
    cfg = write(tmp_path, SMALL_VERIFY)
    out = tmp_path / "v.csv"
    assert cli.main(["verify", "--config", cfg, "--suite", "gradient", "--out", str(out), "--format", "csv"]) == 0
    rows = read_csv(out)
    assert [r["suite"] for r in rows] == ["gradient"] and rows[0]["pass"] == "true" and rows[0]["violations"] == "0"


def test_unknown_suite(tmp_path):
    with pytest.raises(SystemExit) as exc:
        cli.main(["verify", "--config", str(CONFIGS / "nonlinear.toml"), "--suite", "everything", "--out", str(tmp_path / "v")])
    assert exc.value.code == 2


def test_seed_and_threads(tmp_path, monkeypatch):
    cfg = write(tmp_path, SMALL_VERIFY)
    a, b, c = (tmp_path / n for n in ("a.json", "b.json", "c.json"))
    cli.main(["verify", "--config", cfg, "--suite", "lemma", "--out", str(a)])
    monkeypatch.setenv("RABIFLOW_THREADS", "3")
    cli.main(["verify", "--config", cfg, "--suite", "lemma", "--out", str(b)])
    assert a.read_bytes() == b.read_bytes()
    cli.main(["verify", "--config", cfg, "--suite", "lemma", "--out", str(c), "--seed", "12"])
    assert json.loads(c.read_text())["suites"]["lemma"]["details"]["seed"] == 12


def test_module_entry_point(tmp_path):
    out = tmp_path / "o.csv"
    env = dict(os.environ)
    proc = subprocess.run(
        [sys.executable, "-m", "rabiflow", "orbits", "--config", str(CONFIGS / "ellipsoid.toml"), "--out", str(out)],
        capture_output=True, text=True, env=env,
    )
    assert proc.returncode == 0, proc.stderr
    assert out.exists()
