import numpy as np
import pytest

from polyminmax.lasserre_hierarchy import (DegreeError, build_moment_relaxation, min_order, numerical_rank,
                                           running_best, solve_hierarchy, bounds_rows, write_bounds_csv)
from polyminmax.moments import Box
from polyminmax.oracle import node_grid
from polyminmax.poly_core import Polynomial, VariableSpace
from polyminmax.sdp_solver import solve
from polyminmax.sets import SemialgebraicSet
from catalog import catalog


def _one():
    sp = VariableSpace.from_blocks(["theta"])
    return sp, Polynomial.variable(sp, "theta")


def _grid_min(f, K, box, res=201):
    names = list(box)
    pts = node_grid(Box([box[n][0] for n in names], [box[n][1] for n in names]), res)
    keep = K.residuals(pts) <= 1e-12
    return float(f(pts[keep]).min())


def test_linear_objective_first_order():
    sp, th = _one()
    res = solve_hierarchy(th, SemialgebraicSet(sp, [th * (1 - th)]), 1, 1)
    assert res.lower_bounds[0] == pytest.approx(0.0, abs=1e-6)


def test_double_well_order_two():
    sp, th = _one()
    K = SemialgebraicSet(sp, [4 - th ** 2])
    res = solve_hierarchy((th ** 2 - 1) ** 2, K, 2, 4)
    assert abs(res.bound) <= 1e-6
    assert res.flat_at is not None
    mins = sorted(float(m[0]) for m in res.minimizers)
    assert mins == pytest.approx([-1.0, 1.0], abs=1e-4)
    assert not res.extraction_failed


def test_double_well_on_box_bounds():
    sp, th = _one()
    K = SemialgebraicSet(sp, [], [], {"theta": (-2.0, 2.0)})
    res = solve_hierarchy((th ** 2 - 1) ** 2, K, 2, 4)
    assert sorted(float(m[0]) for m in res.minimizers) == pytest.approx([-1.0, 1.0], abs=1e-4)


def test_unique_interior_minimum():
    sp, th = _one()
    res = solve_hierarchy((th - 0.3) ** 2, SemialgebraicSet(sp, [1 - th ** 2]), 1, 3)
    assert res.flat_at == 1
    assert res.bound == pytest.approx(0.0, abs=1e-6)
    assert res.point[0] == pytest.approx(0.3, abs=1e-5)
    assert res.point_source == "atoms"


def test_quartic_on_box_matches_grid():
    sp = VariableSpace.from_blocks(["a", "b"])
    a, b = Polynomial.variable(sp, "a"), Polynomial.variable(sp, "b")
    f = a ** 4 + b ** 4 - a ** 2 * b ** 2
    box = {"a": (-1.0, 1.0), "b": (-1.0, 1.0)}
    K = SemialgebraicSet(sp, [], [], box)
    res = solve_hierarchy(f, K, 2, 2)
    assert abs(res.bound - _grid_min(f, K, box)) <= 2e-3


def test_order_below_degree_requirement():
    sp, th = _one()
    K = SemialgebraicSet(sp, [4 - th ** 2])
    assert min_order(th ** 4, K) == 2
    with pytest.raises(DegreeError):
        solve_hierarchy(th ** 4, K, 1, 1)
    with pytest.raises(DegreeError):
        build_moment_relaxation(th ** 4, K, 1)


def test_relaxation_solves_to_same_bound():
    sp, th = _one()
    K = SemialgebraicSet(sp, [4 - th ** 2])
    rel = build_moment_relaxation((th ** 2 - 1) ** 2, K, 2)
    sol = solve(rel.problem)
    assert -sol.dual_objective * rel.f_scale == pytest.approx(0.0, abs=1e-6)


@pytest.mark.parametrize("name,f,K,t0,t1,box", catalog(), ids=[c[0] for c in catalog()])
def test_catalog_valid_and_monotone(name, f, K, t0, t1, box):
    res = solve_hierarchy(f, K, t0, t1)
    grid = _grid_min(f, K, box)
    bounds = [b for b in res.lower_bounds if b is not None]
    assert bounds
    assert all(b <= grid + 1e-6 for b in bounds)
    assert all(y >= x - 1e-6 for x, y in zip(bounds, bounds[1:]))
    if res.flat_at is not None and res.minimizers:
        for m in res.minimizers:
            assert K.residuals(m)[0] <= 1e-6
            assert f(m) <= res.bound + 1e-4 * (1 + abs(res.bound))


def test_equality_constrained_minimum():
    sp = VariableSpace.from_blocks(["x", "y"])
    x, y = Polynomial.variable(sp, "x"), Polynomial.variable(sp, "y")
    K = SemialgebraicSet(sp, [], [x + y - 1], {"x": (-2.0, 2.0), "y": (-2.0, 2.0)})
    for presolve in (True, False):
        res = solve_hierarchy(x ** 2 + y ** 2, K, 1, 2, presolve=presolve)
        assert res.bound == pytest.approx(0.5, abs=1e-6)
        assert res.point == pytest.approx([0.5, 0.5], abs=1e-5)


def test_numerical_rank():
    v = np.array([1.0, 2.0, 3.0])
    assert numerical_rank(np.outer(v, v)) == (1, True)
    assert numerical_rank(np.diag([1.0, 1e-3, 1e-5]))[0] == 3


def test_running_best_examples():
    rb = running_best([5.0, 3.0, 4.0], ["a", "b", "c"], [1, 2, 3])
    assert rb.best == [5.0, 3.0, 3.0] and rb.best_tau[-1] == 2 and rb.point == "b"
    one = running_best([2.0])
    assert one.best == [2.0] and one.value == 2.0
    with pytest.raises(ValueError):
        running_best([])


def test_bounds_csv(tmp_path):
    sp, th = _one()
    res = solve_hierarchy((th ** 2 - 1) ** 2, SemialgebraicSet(sp, [4 - th ** 2]), 2, 3)
    write_bounds_csv(tmp_path / "b.csv", bounds_rows(res, tau=1))
    lines = (tmp_path / "b.csv").read_text().splitlines()
    assert lines[0].startswith("tau,t,status,bound")
    assert len(lines) == 1 + len(res.records)
