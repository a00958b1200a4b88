import numpy as np
import pytest

from polyminmax.moments import Box
from polyminmax.oracle import (EmptyGridError, cell_grid, feasible_mask, grid_max, grid_minmax, node_grid,
                               projected_violation, rejection_sample)
from polyminmax.poly_core import Polynomial, VariableSpace
from polyminmax.sets import SemialgebraicSet


def _toy():
    sp = VariableSpace.from_blocks(["theta"], ["alpha"])
    th, al = Polynomial.variable(sp, "theta"), Polynomial.variable(sp, "alpha")
    J = (th - al) ** 2
    S = SemialgebraicSet(sp, [1 - al ** 2], [], {"alpha": (-1.0, 1.0)})
    M = SemialgebraicSet(VariableSpace.from_blocks(["theta"]), [], [], {"theta": (-1.0, 1.0)})
    return J, S, M


def test_grid_max_examples():
    J, S, _ = _toy()
    g = grid_max(J, 0.5, S, 1001)
    assert abs(g.value - 2.25) <= 1e-3
    assert g.value <= 2.25 + 1e-12 and g.error >= 2.25 - g.value
    assert grid_max(J, 0.0, S, 1001).value == pytest.approx(1.0, abs=1e-12)


def test_grid_max_empty_set():
    sp = VariableSpace.from_blocks(["theta"], ["alpha"])
    al = Polynomial.variable(sp, "alpha")
    S = SemialgebraicSet(sp, [al - 2.0], [], {"alpha": (-1.0, 1.0)})
    with pytest.raises(EmptyGridError):
        grid_max(al, 0.0, S, 101)


def test_grid_minmax_toy():
    J, S, M = _toy()
    g = grid_minmax(J, M, S, 101, 1001)
    assert g.theta == pytest.approx([0.0], abs=1e-12)
    assert abs(g.value - 1.0) <= 2e-3


def test_grid_minmax_interval_center():
    sp = VariableSpace.from_blocks(["theta"], ["nu"])
    th, nu = Polynomial.variable(sp, "theta"), Polynomial.variable(sp, "nu")
    S = SemialgebraicSet(sp, [], [], {"nu": (0.0, 1.0)})
    M = SemialgebraicSet(VariableSpace.from_blocks(["theta"]), [], [], {"theta": (-1.0, 2.0)})
    g = grid_minmax((nu - th) ** 2, M, S, 301, 101)
    assert g.theta[0] == pytest.approx(0.5, abs=1e-9)
    assert g.value == pytest.approx(0.25, abs=1e-9)


def test_grid_minmax_refinement_within_error():
    J, S, M = _toy()
    coarse = grid_minmax(J, M, S, 51, 51)
    fine = grid_minmax(J, M, S, 101, 101)
    assert abs(fine.value - coarse.value) <= coarse.error


def test_grids():
    b = Box([0.0, -1.0], [1.0, 1.0])
    assert node_grid(b, 3).shape == (9, 2)
    pts, w = cell_grid(b, 4)
    assert pts.shape == (16, 2) and w.sum() == pytest.approx(1.0)
    assert pts[:, 0].min() == pytest.approx(0.125)


def test_rejection_sample_disk():
    sp = VariableSpace.generic(2)
    x, y = Polynomial.variable(sp, 0), Polynomial.variable(sp, 1)
    disk = SemialgebraicSet(sp, [1 - x ** 2 - y ** 2])
    s = rejection_sample(disk, Box([-1.0, -1.0], [1.0, 1.0]), proposals=100_000, seed=1)
    assert abs(s.acceptance_rate - np.pi / 4) <= 0.02
    assert np.all(disk.residuals(s.points) <= 1e-9)
    again = rejection_sample(disk, Box([-1.0, -1.0], [1.0, 1.0]), proposals=100_000, seed=1)
    assert np.array_equal(s.points, again.points)


def test_rejection_sample_empty():
    sp = VariableSpace.generic(1)
    x = Polynomial.variable(sp, 0)
    S = SemialgebraicSet(sp, [x - 1, -x])
    with pytest.raises(EmptyGridError):
        rejection_sample(S, Box([-2.0], [2.0]), count=10, proposals=10_000)


def test_projection_membership():
    # {(x, y): y = x, 0 <= y <= 1} projected on x is [0, 1]
    sp = VariableSpace.from_blocks(["x"], ["y"])
    x, y = Polynomial.variable(sp, "x"), Polynomial.variable(sp, "y")
    S = SemialgebraicSet(sp, [], [y - x], {"y": (0.0, 1.0)})
    m = feasible_mask(S, ["x"], np.array([[-0.5], [0.0], [0.5], [1.0], [1.5]]))
    assert m.tolist() == [False, True, True, True, False]
    # lift bounds are kept hard, so the best lift is y = 1 with residual |y - x| = 0.5
    v, lift = projected_violation(S, {"x": 1.5})
    assert v == pytest.approx(0.5, abs=1e-7)
    assert lift["y"] == pytest.approx(1.0, abs=1e-7)
