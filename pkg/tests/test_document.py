import copy
import json

import numpy as np
import pytest

from polyminmax.document import DocumentError, dumps, load_problem, parse_problem, problem_document, save_problem
from polyminmax.estimation import (arx_conditional_center, miso_robust_projection, simulate_miso_static,
                                   simulate_quantized_arx)


def _doc(name):
    from pathlib import Path
    return json.loads((Path(__file__).parent / "data" / name).read_text())


@pytest.mark.parametrize("name", ["toy_minmax.json", "double_well.json", "unit_disk.json"])
def test_sample_documents_round_trip(name):
    doc = _doc(name)
    once = problem_document(parse_problem(doc))
    assert once == doc
    assert problem_document(parse_problem(json.loads(dumps(once)))) == once


def test_generated_documents_round_trip(tmp_path):
    for prob in (arx_conditional_center(simulate_quantized_arx(1, 5)),
                 miso_robust_projection(simulate_miso_static(1, N=3, subset=[1, 3], terms=[1, 3]))):
        doc = problem_document(prob)
        assert problem_document(parse_problem(json.loads(dumps(doc)))) == doc
        save_problem(prob, tmp_path / "p.json")
        again = load_problem(tmp_path / "p.json")
        assert again.J == prob.J and again.kind == prob.kind
        assert again.M.bounds == prob.M.bounds and again.copies == prob.copies


def test_rip_flag_written():
    doc = problem_document(arx_conditional_center(simulate_quantized_arx(1, 5)))
    assert doc["rip_valid"] is True


@pytest.mark.parametrize("edit,message", [
    (lambda d: d.update(extra=1), "unknown key 'extra'"),
    (lambda d: d.update(kind="median"), "kind: unknown value"),
    (lambda d: d["variables"].update(theta=[]), "variables.theta"),
    (lambda d: d["variables"].update(alpha="alpha"), "variables.alpha"),
    (lambda d: d.pop("objective"), "objective: missing"),
    (lambda d: d["objective"]["terms"][0].update(exps=[1]), "objective: term 0: expected 2 exponents"),
    (lambda d: d["objective"].update(terms=None), "objective: expected a polynomial record"),
    (lambda d: d["inner_set"].update(cone=[]), "inner_set: unknown key 'cone'"),
    (lambda d: d["inner_set"]["bounds"].update(beta=[0, 1]), "inner_set.bounds: unknown variable 'beta'"),
    (lambda d: d["inner_set"]["bounds"].update(alpha=[1, 0]), "inner_set.bounds.alpha: invalid interval"),
    (lambda d: d.update(a_priori_box={"alpha": [0, 1]}), "a_priori_box: 'alpha' is not a parameter"),
    (lambda d: d.update(cliques=[["theta", "zeta"]]), "cliques\\[0\\]: unknown variables"),
    (lambda d: d.update(box=[[0, 1], [0, 1]]), "box: expected 1 intervals"),
    (lambda d: d.update(copies=["theta"]), "copies"),
])
def test_malformed_documents(edit, message):
    doc = copy.deepcopy(_doc("toy_minmax.json"))
    edit(doc)
    with pytest.raises(DocumentError, match=message):
        parse_problem(doc)


def test_json_syntax_error_location(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text('{"kind": "general_minmax",\n "variables": }')
    with pytest.raises(DocumentError, match="line 2 column"):
        load_problem(p)


def test_dumps_numpy_values():
    out = json.loads(dumps({"a": np.arange(3.0), "b": np.float64(1.5), "c": np.int64(2)}))
    assert out == {"a": [0.0, 1.0, 2.0], "b": 1.5, "c": 2}
    with pytest.raises(TypeError):
        dumps({"x": object()})
