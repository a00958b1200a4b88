"""Command line: ``polyminmax {solve,simulate,value-approx,polymin,bound-box,oracle}``.

Every command reads the JSON problem document of :mod:`polyminmax.document`
and writes its artifacts to files, so stages compose: ``bound-box`` writes a
box file that ``value-approx`` and ``solve`` accept, and ``value-approx``
writes a polynomial that ``polymin`` can minimize.

Exit codes: 0 success, 2 degraded (minimizer extraction failed or the
estimate is infeasible), 1 error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .bounding_box import outer_box
from .document import DocumentError, dumps, load_problem, problem_document
from .estimation import (EstimationProblem, arx_conditional_center, miso_robust_projection, simulate_miso_static,
                         simulate_quantized_arx, solve_two_stage)
from .lasserre_hierarchy import bounds_rows, min_order, solve_hierarchy, write_bounds_csv
from .moments import Box
from .oracle import EmptyGridError, grid_minmax, node_grid
from .poly_core import Polynomial
from .sdp_solver import SolverFailure, SolverSettings
from .sos_relaxation import approximate_value_function, write_surface_csv

EXIT_OK, EXIT_ERROR, EXIT_DEGRADED = 0, 1, 2
SURFACE_POINTS = 2000
ORACLE_DIM = 3

log = logging.getLogger("polyminmax")


class UsageError(ValueError):
    pass


def _int_list(text: str) -> list[int]:
    try:
        out = [int(v) for v in text.replace(" ", "").split(",") if v]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma separated list of integers, got {text!r}") from None
    if not out:
        raise argparse.ArgumentTypeError("empty list")
    return out


def _settings(args) -> SolverSettings:
    return SolverSettings(tol=args.tol, max_iter=args.max_iter)


def _theta(problem: EstimationProblem, x) -> dict:
    return {nm: float(v) for nm, v in zip(problem.theta_names, np.asarray(x, dtype=float))}


def _box_record(names, box: Box) -> dict:
    return {"names": list(names), "lower": [float(v) for v in box.lower], "upper": [float(v) for v in box.upper]}


def _read_box(path, names) -> Box:
    rec = json.loads(Path(path).read_text(encoding="utf-8"))
    if list(rec.get("names", names)) != list(names):
        raise UsageError(f"{path}: box names {rec.get('names')} do not match the parameters {list(names)}")
    return Box(np.array(rec["lower"], dtype=float), np.array(rec["upper"], dtype=float))


def _write_json(path: Path, obj) -> None:
    path.write_text(dumps(obj), encoding="utf-8")


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _surface_grid(box: Box) -> np.ndarray:
    res = int(max(2, min(41, np.floor(SURFACE_POINTS ** (1.0 / box.dim)))))
    return node_grid(box, res), res


def _inner_max_on(problem: EstimationProblem, box: Box, res: int, inner_res: int) -> np.ndarray:
    """Oracle inner maximum at every node of the surface grid."""
    g = grid_minmax(problem.J, None, problem.S, res, inner_res, outer_box=box)
    return g.values


def _oracle_block(problem: EstimationProblem, box: Box, estimate, value, res: int, inner_res: int) -> dict:
    if len(problem.theta_names) > ORACLE_DIM:
        return {"skipped": f"{len(problem.theta_names)} parameters exceed the oracle limit of {ORACLE_DIM}"}
    try:
        g = grid_minmax(problem.J, problem.M, problem.S, res, inner_res, outer_box=box)
    except EmptyGridError as exc:
        return {"skipped": str(exc)}
    return {"theta": _theta(problem, g.theta), "value": g.value, "error": g.error,
            "outer_resolution": res, "inner_resolution": inner_res,
            "value_gap": float(value - g.value),
            "estimate_gap": float(np.max(np.abs(np.asarray(estimate) - g.theta)))}


# ---------------------------------------------------------------------------
# commands


def solve_report(problem: EstimationProblem, res) -> dict:
    """The report.json content of a two-stage run (without the oracle block)."""
    return {
        "kind": problem.kind,
        "status": "degraded" if res.degraded else "optimal",
        "estimate": _theta(problem, res.estimate),
        "outer_value": float(res.outer_value),
        "box": _box_record(problem.theta_names, res.box),
        "bounds_per_order": [{"tau": s.tau, "t": r.t, "status": r.status, "bound": r.bound, "flat": r.flat,
                              "ranks": [list(k) for k in r.ranks]}
                             for s in res.sweep for r in s.hierarchy.records],
        "sweep": [{"tau": s.tau, "stage_one_objective": s.value_function.objective_value,
                   "stage_one_status": s.value_function.status, "outer_value": s.outer_value,
                   "estimate": _theta(problem, s.estimate), "extraction_failed": s.hierarchy.extraction_failed,
                   "point_source": s.hierarchy.point_source}
                  for s in res.sweep],
        "running_best": {"taus": res.best.taus, "best": res.best.best, "best_tau": res.best.best_tau},
        "residuals": {"feasibility": res.feasibility_residuals,
                      "certificate": {str(s.tau): s.value_function.residual for s in res.sweep},
                      "moment": [dict(r.residuals, tau=s.tau, t=r.t)
                                 for s in res.sweep for r in s.hierarchy.records]},
        "timings": dict(res.timings, per_tau={str(s.tau): s.timings for s in res.sweep}),
        "warnings": list(res.warnings),
    }


def cmd_solve(args) -> int:
    problem = load_problem(args.problem)
    settings = _settings(args)
    box = _read_box(args.box, problem.theta_names) if args.box else None
    res = solve_two_stage(problem, args.tau, args.order, settings, sparse=args.sparse, box=box)
    out = _out_dir(args)
    rows = []
    for s in res.sweep:
        rows.extend(bounds_rows(s.hierarchy, s.tau))
    write_bounds_csv(out / "bounds.csv", rows)

    grid, gres = _surface_grid(res.box)
    approx = np.atleast_1d(res.value_function(grid))
    oracle_vals = None
    report = solve_report(problem, res)
    if args.oracle_check:
        report["oracle"] = _oracle_block(problem, res.box, res.estimate, res.outer_value, args.oracle_res,
                                         args.inner_res)
        if len(problem.theta_names) <= ORACLE_DIM:
            oracle_vals = _inner_max_on(problem, res.box, gres, args.inner_res)
    write_surface_csv(out / "value_surface.csv", grid, approx, oracle_vals, problem.theta_names)
    _write_json(out / "report.json", report)
    print(f"estimate {report['estimate']}  outer value {res.outer_value:.6g}  [{report['status']}]")
    return EXIT_DEGRADED if res.degraded else EXIT_OK


def cmd_simulate(args) -> int:
    if args.n < 2:
        raise UsageError(f"--n must be at least 2, got {args.n}")
    if args.example == "arx-binary":
        if args.subset is not None or args.terms is not None:
            raise UsageError("--subset and --terms apply to miso-static only")
        problem = arx_conditional_center(simulate_quantized_arx(args.seed, args.n))
    else:
        inst = simulate_miso_static(args.seed, args.n, subset=args.subset, terms=args.terms)
        problem = miso_robust_projection(inst)
    text = dumps(problem_document(problem))
    if args.out in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(args.out).write_text(text, encoding="utf-8")
    return EXIT_OK


def _stage_box(args, problem: EstimationProblem, settings) -> Box:
    if args.box:
        return _read_box(args.box, problem.theta_names)
    if problem.box is not None:
        return problem.box
    t = max(min_order(Polynomial.constant(problem.M.space, 0.0), problem.M), 1) + 1
    return outer_box(problem.M, t, pattern=problem.outer_pattern(), settings=settings)


def cmd_value_approx(args) -> int:
    problem = load_problem(args.problem)
    settings = _settings(args)
    box = _stage_box(args, problem, settings)
    pattern = problem.inner_pattern() if args.sparse else None
    vf = approximate_value_function(problem.J, problem.S, box, args.tau, settings, pattern)
    out = _out_dir(args)
    rec = {"tau": vf.tau, "variables": list(vf.space.names), "polynomial": vf.polynomial.to_record(),
           "objective": vf.objective_value, "residual": vf.residual, "status": vf.status,
           "box": _box_record(problem.theta_names, box)}
    _write_json(out / "value_function.json", rec)
    grid, gres = _surface_grid(box)
    oracle_vals = None
    if args.oracle_check and len(problem.theta_names) <= ORACLE_DIM:
        oracle_vals = _inner_max_on(problem, box, gres, args.inner_res)
    write_surface_csv(out / "value_surface.csv", grid, np.atleast_1d(vf(grid)), oracle_vals, problem.theta_names)
    print(f"tau {vf.tau}: objective {vf.objective_value:.6g}, certificate residual {vf.residual:.1e}")
    return EXIT_OK


def cmd_polymin(args) -> int:
    problem = load_problem(args.problem)
    settings = _settings(args)
    M = problem.M
    if args.objective:
        rec = json.loads(Path(args.objective).read_text(encoding="utf-8"))
        names = rec.get("variables", list(problem.theta_names))
        if list(names) != list(problem.theta_names):
            raise UsageError(f"{args.objective}: variables {names} are not the parameters {list(problem.theta_names)}")
        try:
            f = Polynomial.from_record(M.space.theta_space(), rec.get("polynomial", rec))
        except ValueError as exc:
            raise DocumentError(f"{args.objective}: {exc}") from None
        f = f.embed(M.space)
    else:
        if problem.J.space.alpha_names:
            raise UsageError("the objective depends on uncertain variables; pass --objective "
                             "(e.g. the output of value-approx)")
        f = problem.J.embed(M.space)
    t = args.order or min_order(f, M)
    pattern = problem.outer_pattern() if args.sparse else None
    hier = solve_hierarchy(f, M, t, max(t, args.max_order or t + 1), settings, pattern)
    out = _out_dir(args)
    write_bounds_csv(out / "bounds.csv", bounds_rows(hier))
    rec = {"bound": hier.bound, "orders": hier.orders, "lower_bounds": hier.lower_bounds,
           "flat_at": hier.flat_at,
           "minimizers": None if hier.minimizers is None else [[float(v) for v in m] for m in hier.minimizers],
           "point": None if hier.point is None else [float(v) for v in hier.point],
           "point_source": hier.point_source, "point_residual": hier.point_residual,
           "extraction_failed": hier.extraction_failed, "variables": list(M.space.names),
           "warnings": hier.warnings}
    _write_json(out / "polymin.json", rec)
    print(f"bound {hier.bound:.8g}  minimizers {rec['minimizers']}")
    return EXIT_DEGRADED if hier.extraction_failed else EXIT_OK


def cmd_bound_box(args) -> int:
    problem = load_problem(args.problem)
    pattern = problem.outer_pattern() if args.sparse else None
    t = args.order or max(min_order(Polynomial.constant(problem.M.space, 0.0), problem.M), 1) + 1
    box = outer_box(problem.M, t, padding=args.padding, pattern=pattern, settings=_settings(args))
    out = _out_dir(args)
    rec = _box_record(problem.theta_names, box)
    rec["order"] = t
    _write_json(out / "box.json", rec)
    print("  ".join(f"{nm} in [{a:.6g}, {b:.6g}]" for nm, a, b in zip(rec["names"], rec["lower"], rec["upper"])))
    return EXIT_OK


def cmd_oracle(args) -> int:
    problem = load_problem(args.problem)
    if args.box or any(nm not in problem.M.bounds for nm in problem.theta_names):
        box = _stage_box(args, problem, _settings(args))
    else:
        box = Box(*zip(*[problem.M.bounds[nm] for nm in problem.theta_names]))
    g = grid_minmax(problem.J, problem.M, problem.S, args.oracle_res, args.inner_res, outer_box=box)
    out = _out_dir(args)
    _write_json(out / "oracle.json", {"theta": _theta(problem, g.theta), "value": g.value, "error": g.error,
                                      "outer_resolution": args.oracle_res, "inner_resolution": args.inner_res,
                                      "feasible_points": len(g.thetas)})
    write_surface_csv(out / "oracle_surface.csv", g.thetas, g.values, None, problem.theta_names)
    print(f"oracle center {_theta(problem, g.theta)}  value {g.value:.6g} +- {g.error:.2g}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def _solver_flags(p):
    p.add_argument("--tol", type=float, default=1e-8, help="SDP tolerance")
    p.add_argument("--max-iter", type=int, default=100, help="SDP iteration limit")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--sparse", dest="sparse", action="store_true", default=True,
                   help="use the document's clique pattern (default)")
    g.add_argument("--dense", dest="sparse", action="store_false", help="ignore cliques")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="polyminmax", description="Two-stage SOS / moment min-max estimation.")
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="run both stages and write report.json, value_surface.csv, bounds.csv")
    p.add_argument("--problem", required=True)
    p.add_argument("--tau", type=_int_list, default=None, help="comma separated list, e.g. 1,2,3")
    p.add_argument("--order", type=int, default=None, help="lowest moment relaxation order")
    p.add_argument("--box", default=None, help="box file from bound-box instead of computing one")
    p.add_argument("--oracle-check", action="store_true", help="add a grid oracle block to the report")
    p.add_argument("--oracle-res", type=int, default=101)
    p.add_argument("--inner-res", type=int, default=101)
    p.add_argument("--out", required=True, help="output directory")
    _solver_flags(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("simulate", help="write a problem document for one of the built-in examples")
    p.add_argument("--example", required=True, choices=["arx-binary", "miso-static"])
    p.add_argument("--n", type=int, required=True, help="number of samples")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--subset", type=_int_list, default=None, help="miso-static parameter subset, e.g. 1,3")
    p.add_argument("--terms", type=_int_list, default=None, help="miso-static model terms to keep")
    p.add_argument("--out", default=None, help="output file (stdout when omitted)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("value-approx", help="stage one only: polynomial upper bound of the inner max")
    p.add_argument("--problem", required=True)
    p.add_argument("--tau", type=int, default=None)
    p.add_argument("--box", default=None)
    p.add_argument("--oracle-check", action="store_true", help="add an oracle column to the surface CSV")
    p.add_argument("--inner-res", type=int, default=101)
    p.add_argument("--out", required=True)
    _solver_flags(p)
    p.set_defaults(func=cmd_value_approx)

    p = sub.add_parser("polymin", help="stage two only: moment hierarchy for a polynomial over the outer set")
    p.add_argument("--problem", required=True)
    p.add_argument("--objective", default=None, help="value_function.json to minimize instead of the objective")
    p.add_argument("--order", type=int, default=None)
    p.add_argument("--max-order", type=int, default=None)
    p.add_argument("--out", required=True)
    _solver_flags(p)
    p.set_defaults(func=cmd_polymin)

    p = sub.add_parser("bound-box", help="outer box of the outer set in the parameters")
    p.add_argument("--problem", required=True)
    p.add_argument("--order", type=int, default=None)
    p.add_argument("--padding", type=float, default=None)
    p.add_argument("--out", required=True)
    _solver_flags(p)
    p.set_defaults(func=cmd_bound_box)

    p = sub.add_parser("oracle", help="brute-force grid min-max")
    p.add_argument("--problem", required=True)
    p.add_argument("--box", default=None)
    p.add_argument("--oracle-res", type=int, default=101)
    p.add_argument("--inner-res", type=int, default=101)
    p.add_argument("--out", required=True)
    _solver_flags(p)
    p.set_defaults(func=cmd_oracle)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        return args.func(args)
    except (DocumentError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
    except SolverFailure as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
    except (ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
    return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
