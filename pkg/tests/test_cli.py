import csv
import json
import subprocess
import sys
from pathlib import Path

import pytest

from polyminmax.cli import EXIT_ERROR, EXIT_OK, main

DATA = Path(__file__).parent / "data"


def _strip_timings(rep):
    rep = dict(rep)
    rep.pop("timings")
    return rep


def test_solve_toy(tmp_path):
    out = tmp_path / "run"
    code = main(["solve", "--problem", str(DATA / "toy_minmax.json"), "--tau", "1,2", "--oracle-check",
                 "--oracle-res", "41", "--inner-res", "41", "--out", str(out)])
    assert code == EXIT_OK
    rep = json.loads((out / "report.json").read_text())
    assert abs(rep["estimate"]["theta"]) <= 0.05
    assert rep["running_best"]["taus"] == [1, 2]
    assert rep["oracle"]["theta"]["theta"] == pytest.approx(0.0, abs=1e-9)
    assert rep["outer_value"] >= rep["oracle"]["value"] - 1e-6
    with open(out / "bounds.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert {r["tau"] for r in rows} == {"1", "2"}
    with open(out / "value_surface.csv") as fh:
        header = next(csv.reader(fh))
    assert header[0] == "theta" and "oracle" in header[-1]


def test_solve_is_deterministic(tmp_path):
    reps = []
    for k in range(2):
        out = tmp_path / f"r{k}"
        assert main(["solve", "--problem", str(DATA / "toy_minmax.json"), "--tau", "2", "--out", str(out)]) == 0
        reps.append(_strip_timings(json.loads((out / "report.json").read_text())))
    assert reps[0] == reps[1]


def test_value_approx_then_polymin(tmp_path):
    va = tmp_path / "va"
    assert main(["value-approx", "--problem", str(DATA / "toy_minmax.json"), "--tau", "2", "--out", str(va)]) == 0
    rec = json.loads((va / "value_function.json").read_text())
    assert rec["variables"] == ["theta"] and rec["residual"] <= 1e-6
    pm = tmp_path / "pm"
    code = main(["polymin", "--problem", str(DATA / "toy_minmax.json"), "--objective",
                 str(va / "value_function.json"), "--out", str(pm)])
    assert code == EXIT_OK
    res = json.loads((pm / "polymin.json").read_text())
    assert abs(res["point"][0]) <= 0.05


def test_polymin_double_well(tmp_path):
    code = main(["polymin", "--problem", str(DATA / "double_well.json"), "--order", "2", "--out", str(tmp_path)])
    assert code == EXIT_OK
    res = json.loads((tmp_path / "polymin.json").read_text())
    assert res["bound"] == pytest.approx(0.0, abs=1e-6)
    assert sorted(m[0] for m in res["minimizers"]) == pytest.approx([-1, 1], abs=1e-4)


def test_polymin_needs_objective_for_minmax(tmp_path, capsys):
    code = main(["polymin", "--problem", str(DATA / "toy_minmax.json"), "--out", str(tmp_path)])
    assert code == EXIT_ERROR
    assert "--objective" in capsys.readouterr().err


def test_bound_box_disk(tmp_path):
    code = main(["bound-box", "--problem", str(DATA / "unit_disk.json"), "--order", "1", "--padding", "0",
                 "--out", str(tmp_path)])
    assert code == EXIT_OK
    box = json.loads((tmp_path / "box.json").read_text())
    assert box["lower"] == pytest.approx([-1, -1], abs=1e-4)
    assert box["upper"] == pytest.approx([1, 1], abs=1e-4)


def test_solve_with_box_file(tmp_path):
    bb = tmp_path / "bb"
    assert main(["bound-box", "--problem", str(DATA / "toy_minmax.json"), "--out", str(bb)]) == 0
    out = tmp_path / "s"
    assert main(["solve", "--problem", str(DATA / "toy_minmax.json"), "--tau", "1", "--box",
                 str(bb / "box.json"), "--out", str(out)]) == 0
    rep = json.loads((out / "report.json").read_text())
    box = json.loads((bb / "box.json").read_text())
    assert rep["box"]["lower"] == box["lower"]


def test_oracle_command(tmp_path):
    assert main(["oracle", "--problem", str(DATA / "toy_minmax.json"), "--oracle-res", "21", "--inner-res", "21",
                 "--out", str(tmp_path)]) == 0
    rec = json.loads((tmp_path / "oracle.json").read_text())
    assert rec["theta"]["theta"] == pytest.approx(0.0) and rec["value"] == pytest.approx(1.0)


def test_simulate_writes_loadable_documents(tmp_path, capsys):
    p = tmp_path / "miso.json"
    assert main(["simulate", "--example", "miso-static", "--n", "4", "--subset", "1,3", "--terms", "1,3",
                 "--out", str(p)]) == 0
    doc = json.loads(p.read_text())
    assert doc["kind"] == "robust_projection" and doc["variables"]["theta"] == ["theta1", "theta3"]
    assert main(["simulate", "--example", "arx-binary", "--n", "4", "--seed", "3"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["kind"] == "conditional_center" and doc["rip_valid"] is True


@pytest.mark.parametrize("argv,text", [
    (["simulate", "--example", "arx-binary", "--n", "1"], "--n must be at least 2"),
    (["simulate", "--example", "arx-binary", "--n", "4", "--subset", "1"], "miso-static only"),
    (["simulate", "--example", "miso-static", "--n", "4", "--subset", "9"], "subset"),
    (["solve", "--problem", "missing.json", "--out", "x"], "missing.json"),
])
def test_usage_errors(argv, text, capsys):
    assert main(argv) == EXIT_ERROR
    assert text in capsys.readouterr().err


def test_malformed_document_exit_code(tmp_path, capsys):
    doc = json.loads((DATA / "toy_minmax.json").read_text())
    doc["objective"]["terms"][0]["exps"] = [1]
    p = tmp_path / "bad.json"
    p.write_text(json.dumps(doc))
    assert main(["solve", "--problem", str(p), "--out", str(tmp_path / "o")]) == EXIT_ERROR
    assert "objective: term 0" in capsys.readouterr().err


def test_module_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "polyminmax", "bound-box", "--problem", str(DATA / "unit_disk.json"),
                        "--order", "1", "--out", str(tmp_path)], capture_output=True, text=True)
    assert r.returncode == 0 and "x in [" in r.stdout
    r = subprocess.run([sys.executable, "-m", "polyminmax", "solve"], capture_output=True, text=True)
    assert r.returncode == 2  # argparse usage error
