import csv
import json
from pathlib import Path

import numpy as np
import pytest

from harmonic_mpc import cli
from harmonic_mpc import io as hio
from harmonic_mpc.bench import stable_surrogate_problem
from harmonic_mpc.qpcore import SetupError

DATA = Path(__file__).resolve().parent.parent / "data"


@pytest.fixture
def plant(tmp_path):
    path = tmp_path / "plant.json"
    hio.save_problem(stable_surrogate_problem(), path)
    return path


def state(tmp_path, **doc):
    path = tmp_path / "state.json"
    path.write_text(json.dumps(doc))
    return path


def test_solve_at_rest_converges_fast(tmp_path, plant):
    out = tmp_path / "res.json"
    code = cli.main(["solve", str(plant), str(state(tmp_path, x=[0, 0])), "--out", str(out)])
    assert code == cli.EXIT_OK
    res = json.loads(out.read_text())
    assert res["status"] == "converged" and res["iterations"] <= 50
    np.testing.assert_allclose(res["u0"], [0.0], atol=1e-6)
    assert set(res["theta"]) == {"x_e", "x_s", "x_c", "u_e", "u_s", "u_c"}


def test_solve_encodings_agree(tmp_path):
    outs = {}
    for enc in ("band", "soc-split"):
        out = tmp_path / f"{enc}.json"
        assert cli.main(["solve", str(DATA / "stable_plant.json"), str(DATA / "state.json"),
                         "--encoding", enc, "--out", str(out)]) == 0
        outs[enc] = json.loads(out.read_text())
    assert outs["soc-split"]["encoding"] == "soc-split"
    np.testing.assert_allclose(outs["band"]["u0"], outs["soc-split"]["u0"], atol=1e-3)


def test_solve_reference_file_and_stdout(tmp_path, plant, capsys):
    ref = tmp_path / "ref.json"
    ref.write_text(json.dumps({"x_r": [0.5, 0.25], "u_r": [0.1]}))
    assert cli.main(["solve", str(plant), str(state(tmp_path, x=[0.5, 0.25])), "--reference", str(ref),
                     "--eps-p", "1e-8", "--eps-d", "1e-8"]) == 0
    res = json.loads(capsys.readouterr().out)
    np.testing.assert_allclose(res["u0"], [0.1], atol=1e-4)


def test_solve_iteration_limit_exit_code(tmp_path):
    out = tmp_path / "r.json"
    code = cli.main(["solve", str(DATA / "stable_plant.json"), str(DATA / "state.json"),
                     "--max-iter", "2", "--out", str(out)])
    assert code == cli.EXIT_MAX_ITER
    assert json.loads(out.read_text())["status"] == "max_iterations"


def test_malformed_input_exit_code(tmp_path, plant, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert cli.main(["solve", str(bad), str(state(tmp_path, x=[0, 0]))]) == cli.EXIT_INPUT
    assert "$" in capsys.readouterr().err
    doc = json.loads(plant.read_text())
    doc["A"][1][0] = "x"
    bad.write_text(json.dumps(doc))
    assert cli.main(["solve", str(bad), str(state(tmp_path, x=[0, 0]))]) == cli.EXIT_INPUT
    assert "$.A[1][0]" in capsys.readouterr().err
    assert cli.main(["solve", str(plant), str(state(tmp_path, x=[0, 0, 0]))]) == cli.EXIT_INPUT
    assert "$.x" in capsys.readouterr().err


def test_setup_failure_exit_code(tmp_path, plant, monkeypatch, capsys):
    def boom(*a, **kw):
        raise SetupError("factorization", "matrix is not positive definite")

    monkeypatch.setattr("harmonic_mpc.sim.build_kkt_operators", boom)
    assert cli.main(["solve", str(plant), str(state(tmp_path, x=[0, 0]))]) == cli.EXIT_SETUP
    assert "factorization" in capsys.readouterr().err


def test_simulate_writes_csv_and_plot(tmp_path):
    out = tmp_path / "run" / "trace.csv"
    assert cli.main(["simulate", str(DATA / "scenario.json"), "--steps", "12", "--out", str(out)]) == 0
    rows = list(csv.DictReader(out.open()))
    assert len(rows) == 12
    assert {"t", "x0", "u0", "x_r0", "iterations", "solve_time_us"} <= set(rows[0])
    assert out.with_suffix(".png").stat().st_size > 0


def test_simulate_overrides_and_errors(tmp_path, capsys):
    out = tmp_path / "trace.csv"
    assert cli.main(["simulate", str(DATA / "scenario.json"), "--steps", "0"]) == cli.EXIT_INPUT
    assert "$.steps" in capsys.readouterr().err
    assert cli.main(["simulate", str(DATA / "scenario.json"), "--steps", "3", "--max-iter", "2",
                     "--cold", "--no-plot", "--out", str(out)]) == cli.EXIT_MAX_ITER
    assert not out.with_suffix(".png").exists()
    assert len(out.read_text().strip().splitlines()) == 4


def test_bench_compare_outputs(tmp_path):
    out = tmp_path / "bench"
    assert cli.main(["bench-compare", "--sides-range", "5..5", "--runs", "1", "--min-runs", "1",
                     "--out", str(out)]) == 0
    report = json.loads(out.with_suffix(".json").read_text())
    assert sorted(r["encoding"] for r in report["rows"]) == ["band", "soc-split"]
    assert len(report["ratios"]) == 1
    assert out.with_suffix(".csv").read_text().startswith("encoding,")
    assert out.with_suffix(".png").stat().st_size > 0


def test_bench_compare_rejects_bad_ranges(capsys):
    assert cli.main(["bench-compare", "--runs", "0", "--sides-range", "5..5"]) == cli.EXIT_INPUT
    with pytest.raises(SystemExit):
        cli.main(["bench-compare", "--sides-range", "3..2"])


@pytest.mark.parametrize("text, sides", [("5..9:2", [5, 7, 9]), ("8,16", [8, 16]), ("6..6", [6])])
def test_sides_range_syntax(text, sides):
    assert cli._parse_sides(text) == sides


def test_gen_polygon(tmp_path, capsys):
    out = tmp_path / "poly.json"
    assert cli.main(["gen-polygon", "6", "--radius", "1.5", "--out", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert len(doc["rows"]) == 6 and len(doc["vertices"]) == 6
    np.testing.assert_allclose(np.linalg.norm(doc["vertices"], axis=1), 1.5)
    assert cli.main(["gen-polygon", "2"]) == cli.EXIT_INPUT
