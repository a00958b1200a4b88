"""JSON problem documents and reports.

A document looks like::

    {"kind": "general_minmax",
     "variables": {"theta": [...], "alpha": [...], "lift": [...]},
     "objective": {"terms": [{"exps": [...], "coef": ...}, ...]},
     "inner_set": {"ineq": [...], "eq": [...], "bounds": {...}},
     "outer_set": {"ineq": [...], "eq": [...], "bounds": {...}},
     "a_priori_box": {"theta1": [lo, hi], ...},
     "cliques": [[names], ...]}

The objective and the inner set use exponents over ``theta + alpha``; the
outer set uses ``theta + lift`` (``lift`` may be empty).  ``a_priori_box``
bounds the parameters in the outer set; a set's own ``bounds`` cover the
remaining variables and override it.  Optional keys: ``box`` (the region
for stage one), ``copies`` (parameter copies of a conditional center),
``notes``.  ``rip_valid`` is written next to ``cliques`` for information and
recomputed on output.
"""
from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from .estimation import KINDS, EstimationProblem
from .moments import Box
from .poly_core import Polynomial, VariableSpace
from .sets import SemialgebraicSet
from .sparsity import verify_rip


TOP_KEYS = ("kind", "variables", "objective", "inner_set", "outer_set", "a_priori_box", "cliques", "rip_valid",
            "box", "copies", "notes")


class DocumentError(ValueError):
    """A problem document failed to parse; the message names the offending field."""


def _names(doc: Mapping, key: str) -> list[str]:
    v = doc.get("variables", {}).get(key, [])
    if not isinstance(v, list) or not all(isinstance(s, str) for s in v):
        raise DocumentError(f"variables.{key}: expected a list of names")
    return list(v)


def _poly(space: VariableSpace, rec, where: str) -> Polynomial:
    if not isinstance(rec, Mapping) or not isinstance(rec.get("terms"), list):
        raise DocumentError(f"{where}: expected a polynomial record with a 'terms' list")
    try:
        return Polynomial.from_record(space, rec)
    except ValueError as exc:
        raise DocumentError(f"{where}: {exc}") from None


def _interval(v, where: str) -> tuple[float, float]:
    if not isinstance(v, (list, tuple)) or len(v) != 2:
        raise DocumentError(f"{where}: expected [lo, hi]")
    lo, hi = float(v[0]), float(v[1])
    if not (math.isfinite(lo) and math.isfinite(hi)) or lo > hi:
        raise DocumentError(f"{where}: invalid interval {v}")
    return lo, hi


def _set(space: VariableSpace, rec, shared: dict, where: str) -> SemialgebraicSet:
    rec = rec or {}
    if not isinstance(rec, Mapping):
        raise DocumentError(f"{where}: expected an object")
    for key in rec:
        if key not in ("ineq", "eq", "bounds"):
            raise DocumentError(f"{where}: unknown key {key!r}")
    ineq = [_poly(space, p, f"{where}.ineq[{k}]") for k, p in enumerate(rec.get("ineq", []))]
    eq = [_poly(space, p, f"{where}.eq[{k}]") for k, p in enumerate(rec.get("eq", []))]
    bounds = {nm: b for nm, b in shared.items() if nm in space.names}
    for nm, v in (rec.get("bounds") or {}).items():
        if nm not in space.names:
            raise DocumentError(f"{where}.bounds: unknown variable {nm!r}")
        bounds[nm] = _interval(v, f"{where}.bounds.{nm}")
    entire = not (ineq or eq or bounds)
    return SemialgebraicSet(space, ineq, eq, bounds, entire)


def parse_problem(doc: Mapping[str, Any]) -> EstimationProblem:
    if not isinstance(doc, Mapping):
        raise DocumentError("document: expected a JSON object")
    for key in doc:
        if key not in TOP_KEYS:
            raise DocumentError(f"document: unknown key {key!r}")
    kind = doc.get("kind", "general_minmax")
    if kind not in KINDS:
        raise DocumentError(f"kind: unknown value {kind!r} (expected one of {', '.join(KINDS)})")
    theta, alpha, lift = _names(doc, "theta"), _names(doc, "alpha"), _names(doc, "lift")
    if not theta:
        raise DocumentError("variables.theta: at least one parameter is required")
    try:
        inner = VariableSpace.from_blocks(theta, alpha)
        outer = VariableSpace.from_blocks(theta, lift)
    except ValueError as exc:
        raise DocumentError(f"variables: {exc}") from None
    if "objective" not in doc:
        raise DocumentError("objective: missing")
    J = _poly(inner, doc["objective"], "objective")
    prior = {}
    for nm, v in (doc.get("a_priori_box") or {}).items():
        if nm not in theta:
            raise DocumentError(f"a_priori_box: {nm!r} is not a parameter")
        prior[nm] = _interval(v, f"a_priori_box.{nm}")
    S = _set(inner, doc.get("inner_set"), {}, "inner_set")
    M = _set(outer, doc.get("outer_set"), prior, "outer_set")
    cliques = doc.get("cliques")
    if cliques is not None:
        known = set(theta + alpha + lift)
        for k, c in enumerate(cliques):
            bad = [nm for nm in c if nm not in known]
            if bad:
                raise DocumentError(f"cliques[{k}]: unknown variables {bad}")
        cliques = [list(c) for c in cliques]
    box = None
    if doc.get("box") is not None:
        rows = [_interval(v, f"box[{k}]") for k, v in enumerate(doc["box"])]
        if len(rows) != len(theta):
            raise DocumentError(f"box: expected {len(theta)} intervals")
        try:
            box = Box(np.array([r[0] for r in rows]), np.array([r[1] for r in rows]))
        except ValueError as exc:
            raise DocumentError(f"box: {exc}") from None
    copies = doc.get("copies")
    if copies is not None and any(nm not in alpha for nm in copies):
        raise DocumentError("copies: every copy must be an alpha variable")
    try:
        return EstimationProblem(kind, J, M, S, cliques, str(doc.get("notes", "")), box,
                                 list(copies) if copies is not None else None)
    except ValueError as exc:
        raise DocumentError(str(exc)) from None


def _set_record(S: SemialgebraicSet, skip=()) -> dict:
    rec = S.to_record()
    bounds = {nm: [lo, hi] for nm, (lo, hi) in S.bounds.items() if nm not in skip}
    if bounds:
        rec["bounds"] = bounds
    return rec


def problem_document(problem: EstimationProblem) -> dict:
    theta = list(problem.J.space.theta_names)
    doc = {
        "kind": problem.kind,
        "variables": {"theta": theta, "alpha": list(problem.J.space.alpha_names),
                      "lift": list(problem.M.space.alpha_names)},
        "objective": problem.J.to_record(),
        "inner_set": _set_record(problem.S),
        "outer_set": _set_record(problem.M, skip=theta),
        "a_priori_box": {nm: list(problem.M.bounds[nm]) for nm in theta if nm in problem.M.bounds},
    }
    if problem.cliques:
        doc["cliques"] = [list(c) for c in problem.cliques]
        doc["rip_valid"] = rip_valid(problem.cliques)
    if problem.box is not None:
        doc["box"] = [[float(a), float(b)] for a, b in zip(problem.box.lower, problem.box.upper)]
    if problem.copies:
        doc["copies"] = list(problem.copies)
    if problem.notes:
        doc["notes"] = problem.notes
    return doc


def rip_valid(cliques) -> bool:
    """Running intersection property of name cliques in the given order."""
    index: dict[str, int] = {}
    sets = [[index.setdefault(nm, len(index)) for nm in c] for c in cliques]
    return verify_rip(sets)[0]


def dumps(obj) -> str:
    return json.dumps(obj, indent=1, sort_keys=False, default=_jsonable) + "\n"


def _jsonable(x):
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, np.generic):
        return x.item()
    raise TypeError(f"cannot serialize {type(x).__name__}")


def load_problem(path) -> EstimationProblem:
    text = Path(path).read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DocumentError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return parse_problem(doc)


def save_problem(problem: EstimationProblem, path) -> None:
    Path(path).write_text(dumps(problem_document(problem)), encoding="utf-8")
