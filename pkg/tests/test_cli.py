import csv
import subprocess
import sys

import pytest

from carbon_threshold.cli import main


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def as_dict(rows):
    return {r[0]: r[1:] for r in rows[1:]}


def test_solve_baseline(tmp_path):
    out = tmp_path / "solve.csv"
    assert main(["solve", "--out", str(out)]) == 0
    rows = read_rows(out)
    assert rows[0] == ["quantity", "value", "note"]
    d = as_dict(rows)
    assert float(d["b_star_E"][0]) == pytest.approx(5.51, abs=0.01)
    assert float(d["b_star"][0]) == pytest.approx(3.86, abs=0.01)
    assert d["b_star"][1] == ""
    assert 0.99 < float(d["psi"][0]) <= 1.0


def test_solve_flags_no_bias(tmp_path):
    out = tmp_path / "solve.csv"
    assert main(["solve", "--set", "bias.lambda=0", "--no-psi", "--out", str(out)]) == 0
    d = as_dict(read_rows(out))
    assert d["b_star"] == [d["b_star_E"][0], "no bias"]


def test_solve_writes_value_samples(tmp_path):
    out, samples = tmp_path / "s.csv", tmp_path / "v.csv"
    assert main(["solve", "--no-psi", "--out", str(out), "--samples", str(samples), "--sample-step", "1"]) == 0
    rows = read_rows(samples)
    assert rows[0] == ["x", "V_E", "V"]
    assert rows[1] == ["0", "0", "0"]
    assert all(float(r[2]) <= float(r[1]) for r in rows[1:])


def test_exit_codes(tmp_path, capsys):
    assert main(["solve", "--set", "econ.rho=1"]) == 2
    assert main(["solve", "--set", "econ.c_tax=0.9"]) == 2
    assert main(["solve", "--config", str(tmp_path / "missing.cfg")]) == 4
    assert main(["solve", "--no-psi", "--out", str(tmp_path / "no" / "dir.csv")]) == 4
    assert main(["validate", "--config", "ou"]) == 2
    bad = tmp_path / "bad.cfg"
    bad.write_text("model.kind = constant\n")
    assert main(["solve", "--config", str(bad)]) == 2
    err = capsys.readouterr().err
    assert "MissingKey" in err


def test_numerical_failure_exit_code(tmp_path):
    # a very slow mean reversion leaves the far field unresolved even after the domain is extended
    cfg = ["--config", "ou", "--set", "model.kappa=0.0005", "--set", "grid.x_max=60"]
    assert main(["solve", "--no-psi", *cfg, "--out", str(tmp_path / "x.csv")]) == 3


def test_table_and_determinism(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(["table", "T3", "--out", str(a)]) == 0
    assert main(["table", "T3", "--out", str(b), "--threads", "2"]) == 0
    assert a.read_bytes() == b.read_bytes()
    rows = read_rows(a)
    assert rows[0] == ["Lambda_bar", "b_star", "error"]
    assert len(rows) == 6


def test_table_calibration_report(tmp_path, capsys):
    targets = tmp_path / "targets.csv"
    assert main(["table", "T3", "--set", "econ.beta_override=0.1", "--out", str(targets)]) == 0
    out = tmp_path / "t3.csv"
    assert main(["table", "T3", "--targets", str(targets), "--bounds", "0,0.3", "--pinned", "0.2",
                 "--out", str(out)]) == 0
    err = capsys.readouterr().err
    assert "pinned econ.beta_override=0.2" in err and "misses" in err
    best = float(err.split("best fit econ.beta_override=")[1].split(":")[0])
    assert best == pytest.approx(0.1, abs=1e-3)


def test_sweep_digits_and_roots(tmp_path):
    out = tmp_path / "sw.csv"
    assert main(["sweep", "--param", "econ.c_tax=0:0.1:0.05", "--outputs", "b_star_E,b_star,roots",
                 "--digits", "4", "--out", str(out)]) == 0
    rows = read_rows(out)
    assert rows[0] == ["c_tax", "b_star_E", "b_star", "roots", "error"]
    assert [r[0] for r in rows[1:]] == ["0", "0.05", "0.1"]
    assert all(len(r[2].replace(".", "")) <= 4 for r in rows[1:])
    assert all(r[3] == r[2] for r in rows[1:])


def test_paths_share_noise(tmp_path):
    d = tmp_path / "paths"
    assert main(["paths", "--thresholds", "5.51,3.86", "--seed", "3", "--out-dir", str(d)]) == 0
    summary = read_rows(d / "summary.csv")
    assert summary[0] == ["threshold", "seed", "file", "tau", "depleted_by_T"]
    files = [d / r[2] for r in summary[1:]]
    assert len(files) == 2
    p1, p2 = read_rows(files[0]), read_rows(files[1])
    assert p1[0] == ["t", "X", "emitting"]
    first_diff = next(i for i, (u, v) in enumerate(zip(p1, p2)) if u != v)
    assert first_diff > 2
    assert p1[:first_diff] == p2[:first_diff]
    for row, path in zip(summary[1:], (p1, p2)):
        depleted = float(path[-1][1]) == 0.0 and float(path[-1][0]) <= 25.0
        assert row[4] == ("1" if depleted else "0")


def test_paths_deterministic(tmp_path):
    for sub in ("a", "b"):
        assert main(["paths", "--thresholds", "4", "--seed", "9", "--horizon", "3", "--out-dir",
                     str(tmp_path / sub)]) == 0
    assert (tmp_path / "a" / "path_b4_seed9.csv").read_bytes() == (tmp_path / "b" / "path_b4_seed9.csv").read_bytes()


def test_validate_constant_config(tmp_path):
    out = tmp_path / "v.csv"
    assert main(["validate", "--out", str(out)]) == 0
    rows = read_rows(out)
    assert all(r[-1] == "ok" for r in rows[1:])


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "carbon_threshold", "solve", "--no-psi"],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0
    assert proc.stdout.startswith("quantity,value,note")
