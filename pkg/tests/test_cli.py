import csv
import json

import pytest

from wassos import __version__
from wassos.cli import main, parse_eps_grid, ConfigError

TOY = """model:
  dim: 1
  inequalities: ["x1", "1 - x1"]
  norm_bound: 1
  pieces: [["x1"]]
  samples: [[0.5]]
  radius: 0.1
run:
  hierarchy: adtilde
  r: 1
"""


def read_csv(path):
    lines = path.read_text().splitlines()
    return lines[0], list(csv.DictReader(lines[1:]))


@pytest.fixture
def toy(tmp_path):
    path = tmp_path / "toy.yaml"
    path.write_text(TOY)
    return path


def test_solve_revenue_preset(tmp_path, capsys):
    code = main(["solve", "--preset", "paper-revenue", "--hierarchy", "ad", "--r", "2",
                 "--eps", "10", "--out", str(tmp_path)])
    assert code == 0
    meta, rows = read_csv(tmp_path / "solve.csv")
    assert meta.startswith(f"# wassos {__version__} seed=0 config=")
    assert rows[0]["status"] == "optimal"
    assert float(rows[0]["bound"]) == pytest.approx(14.0, abs=1e-4)


def test_export_only(tmp_path):
    code = main(["solve", "--preset", "paper-revenue", "--r", "2", "--eps", "1",
                 "--export-only", "--out", str(tmp_path)])
    assert code == 0
    files = list(tmp_path.glob("*.dat-s"))
    assert len(files) == 1 and not (tmp_path / "solve.csv").exists()


def test_level_too_small(tmp_path, capsys):
    code = main(["solve", "--preset", "paper-revenue", "--r", "1", "--out", str(tmp_path)])
    assert code == 1
    assert "minimum admissible r = 2" in capsys.readouterr().err


@pytest.mark.parametrize("argv", [
    ["solve", "--r", "2"],
    ["solve", "--preset", "nope"],
    ["solve", "--preset", "paper-revenue", "--hierarchy", "xx"],
    ["sweep", "--preset", "paper-revenue", "--eps-grid", "1:2"],
    ["bogus"],
])
def test_config_errors(argv, tmp_path):
    assert main(argv + ["--out", str(tmp_path)]) == 1


def test_io_error(tmp_path, toy):
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert main(["solve", "--model", str(toy), "--out", str(blocker / "sub")]) == 3


def test_config_file_and_flag_override(tmp_path, toy):
    out = tmp_path / "run"
    assert main(["solve", "--config", str(toy), "--model", str(toy), "--eps", "0.2",
                 "--out", str(out)]) == 0
    _, rows = read_csv(out / "solve.csv")
    assert rows[0]["kind"] == "adtilde"
    assert float(rows[0]["bound"]) == pytest.approx(0.3, abs=1e-4)


def test_env_tolerance(tmp_path, toy, monkeypatch):
    monkeypatch.setenv("WASSOS_SOLVER_TOL", "1e-5")
    assert main(["solve", "--model", str(toy), "--hierarchy", "adtilde", "--r", "1",
                 "--out", str(tmp_path)]) == 0
    monkeypatch.setenv("WASSOS_SOLVER_TOL", "abc")
    assert main(["solve", "--model", str(toy), "--out", str(tmp_path)]) == 1


def test_oracle_flow(tmp_path, toy):
    assert main(["oracle", "--out", str(tmp_path)]) == 1  # no artifact yet
    assert main(["solve", "--model", str(toy), "--hierarchy", "adtilde", "--r", "1",
                 "--out", str(tmp_path)]) == 0
    assert main(["oracle", "--out", str(tmp_path)]) == 0
    _, rows = read_csv(tmp_path / "oracle.csv")
    checks = {r["check"]: r for r in rows}
    assert checks["sandwich"]["result"] == "pass"
    spacing = float(checks["grid_spacing"]["value"])
    assert 0 <= float(checks["sandwich"]["slack"]) <= spacing
    assert checks["semiinfinite_residual"]["result"] == "pass"

    art = json.loads((tmp_path / "solve_artifact.json").read_text())
    art["alpha"] = [a + 0.5 for a in art["alpha"]]
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(art))
    assert main(["oracle", "--out", str(tmp_path), "--artifact", str(bad)]) == 2
    _, rows = read_csv(tmp_path / "oracle.csv")
    assert {r["check"]: r["result"] for r in rows}["semiinfinite_residual"] == "fail"


def test_oracle_revenue_residual(tmp_path):
    assert main(["solve", "--preset", "paper-revenue", "--r", "2", "--eps", "1",
                 "--out", str(tmp_path)]) == 0
    assert main(["oracle", "--out", str(tmp_path)]) == 0
    _, rows = read_csv(tmp_path / "oracle.csv")
    res = {r["check"]: r for r in rows}["semiinfinite_residual"]
    assert res["result"] == "pass" and float(res["value"]) >= -1e-5


def test_single_sweep_rows(tmp_path, toy):
    plot = tmp_path / "plot.svg"
    assert main(["sweep", "--model", str(toy), "--hierarchy", "adtilde", "--r", "1",
                 "--eps", "0.1", "--reps", "1", "--out", str(tmp_path), "--plot", str(plot)]) == 0
    meta, rows = read_csv(tmp_path / "sweep.csv")
    assert meta.startswith("# wassos")
    assert len(rows) == 2 and rows[1]["rep"] == "aggregate"
    assert plot.read_text().startswith("<svg")


def test_sweep_r_range_and_grid(tmp_path, toy):
    assert main(["sweep", "--model", str(toy), "--hierarchy", "adtilde", "--r", "1",
                 "--r-max", "2", "--eps-grid", "0.01:0.1:3", "--out", str(tmp_path)]) == 0
    _, rows = read_csv(tmp_path / "sweep.csv")
    raw = [r for r in rows if r["rep"] != "aggregate"]
    assert len(raw) == 6 and {r["r"] for r in raw} == {"1", "2"}


def test_export_grid(tmp_path):
    assert main(["sweep", "--preset", "scal-revenue", "--export-only", "--out", str(tmp_path)]) == 0
    _, rows = read_csv(tmp_path / "counts.csv")
    assert len(rows) == 20
    assert len(list(tmp_path.glob("*.dat-s"))) == 20


def test_eps_grid_parser():
    assert parse_eps_grid("0.001:10:5")[2] == pytest.approx(0.1)
    with pytest.raises(ConfigError):
        parse_eps_grid("1:0.1:3")


def test_config_hash_changes_with_settings(tmp_path, toy):
    a, b = tmp_path / "a", tmp_path / "b"
    main(["solve", "--model", str(toy), "--hierarchy", "adtilde", "--r", "1", "--out", str(a)])
    main(["solve", "--model", str(toy), "--hierarchy", "adtilde", "--r", "2", "--out", str(b)])
    assert read_csv(a / "solve.csv")[0] != read_csv(b / "solve.csv")[0]
