import numpy as np
import pytest

from polyminmax.estimation import simulate_quantized_arx
from polyminmax.lasserre_hierarchy import solve_hierarchy
from polyminmax.poly_core import Polynomial, VariableSpace
from polyminmax.presolve import eliminate_affine_equalities
from polyminmax.sets import SemialgebraicSet


def test_single_equality_eliminated():
    sp = VariableSpace.from_blocks(["theta"], ["d", "e"])
    th, d, e = (Polynomial.variable(sp, nm) for nm in ("theta", "d", "e"))
    K = SemialgebraicSet(sp, [1 - e ** 2], [2 * d + th * e - 1], {"d": (-1.0, 1.0)})
    elim, red = eliminate_affine_equalities(K)
    assert list(elim.solved) == ["d"]
    assert red.space.names == ("theta", "e")
    assert not red.equalities and len(red.inequalities) == 3
    pt = np.array([0.5, 0.4])
    full = elim.lift(pt)
    assert K.residuals(full)[0] <= 1e-12
    assert full[1] == pytest.approx((1 - 0.5 * 0.4) / 2)


def test_variables_used_elsewhere_are_kept():
    sp = VariableSpace.from_blocks(["theta"], ["d"])
    th, d = Polynomial.variable(sp, "theta"), Polynomial.variable(sp, "d")
    K = SemialgebraicSet(sp, [1 - d ** 2], [d - th])
    elim, red = eliminate_affine_equalities(K)
    assert elim.trivial and red is K
    # the objective protects its variables too
    K2 = SemialgebraicSet(sp, [], [d - th], {"d": (-1.0, 1.0)})
    elim, _ = eliminate_affine_equalities(K2, objective=d * d)
    assert elim.trivial
    elim, _ = eliminate_affine_equalities(K2, protect=["d"])
    assert elim.trivial


def test_nonlinear_occurrence_not_eliminated():
    sp = VariableSpace.from_blocks(["theta"], ["d"])
    th, d = Polynomial.variable(sp, "theta"), Polynomial.variable(sp, "d")
    K = SemialgebraicSet(sp, [], [d * th - 1], {"d": (-2.0, 2.0)})
    assert eliminate_affine_equalities(K)[0].trivial


def test_arx_noise_terms_eliminated_and_bound_unchanged():
    inst = simulate_quantized_arx(2, 6)
    elim, red = eliminate_affine_equalities(inst.D)
    assert sorted(elim.solved) == sorted(f"d{t}" for t in range(2, 7))
    truth = inst.truth_point()
    keep = [inst.D.space.index(nm) for nm in red.space.names]
    assert red.residuals(truth[keep])[0] <= 1e-10
    th1 = Polynomial.variable(inst.D.space, "theta1")
    a = solve_hierarchy(th1, inst.D, 1, 1, presolve=True).bound
    b = solve_hierarchy(th1, inst.D, 1, 1, presolve=False).bound
    assert a == pytest.approx(b, abs=1e-5)
