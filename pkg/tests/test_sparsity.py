import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from polyminmax.document import rip_valid
from polyminmax.estimation import miso_clique_indices, miso_robust_projection, simulate_miso_static
from polyminmax.lasserre_hierarchy import solve_hierarchy
from polyminmax.moments import Box
from polyminmax.oracle import node_grid
from polyminmax.poly_core import Polynomial, VariableSpace
from polyminmax.sdp_solver import solve
from polyminmax.sos_relaxation import approximate_value_function, build_value_approx
from polyminmax.sets import SemialgebraicSet
from polyminmax.sparsity import (CoverageError, SparsityPattern, build_sparse_moment_relaxation,
                                 build_sparse_value_approx, verify_rip)
from polyminmax.lasserre_hierarchy import build_moment_relaxation


def _brute_rip(cliques):
    union = set(cliques[0])
    for k in range(1, len(cliques)):
        ov = set(cliques[k]) & union
        if not any(ov <= set(cliques[s]) for s in range(k)):
            return False
        union |= set(cliques[k])
    return True


def test_rip_examples():
    assert verify_rip([{1, 2}, {2, 3}, {3, 4}]) == (True, None)
    assert verify_rip([{1, 2}, {3, 4}, {1, 3}]) == (False, 2)
    assert verify_rip(miso_clique_indices(5)) == (True, None)
    with pytest.raises(ValueError):
        verify_rip([])


def test_rip_is_order_sensitive():
    assert verify_rip([{1, 2}, {2, 3}, {1, 3}, {1, 2, 3}])[0] is False
    assert verify_rip([{1, 2, 3}, {1, 2}, {2, 3}, {1, 3}])[0] is True


@settings(max_examples=300, deadline=None)
@given(st.lists(st.frozensets(st.integers(0, 5), min_size=1, max_size=4), min_size=1, max_size=6))
def test_rip_matches_subset_check(cliques):
    # independent check: some earlier clique contains the overlap, by enumeration of the powerset
    ok, k = verify_rip(cliques)
    assert ok == _brute_rip(cliques)
    if not ok:
        assert not _brute_rip(cliques[:k + 1]) and _brute_rip(cliques[:k])


def test_pattern_coverage_and_names():
    sp = VariableSpace.from_blocks(["a"], ["b", "c"])
    with pytest.raises(ValueError, match="do not cover"):
        SparsityPattern((frozenset({0, 1}),), 3)
    p = SparsityPattern.from_names(sp, [["a", "b"], ["a", "c"]])
    assert p.rip_valid and p.names(sp) == [["a", "b"], ["a", "c"]]
    assert rip_valid([["a", "b"], ["c", "d"], ["a", "c"]]) is False


def _vars(names):
    sp = VariableSpace.from_blocks(names)
    return sp, [Polynomial.variable(sp, nm) for nm in names]


def test_separable_matches_dense():
    sp, (a, b) = _vars(["a", "b"])
    K = SemialgebraicSet(sp, [], [], {"a": (-1.0, 2.0), "b": (0.5, 1.0)})
    f = (a - 0.2) ** 2 + b ** 2
    pat = SparsityPattern((frozenset({0}), frozenset({1})), 2).verified()
    dense = solve_hierarchy(f, K, 1, 1).bound
    sparse = solve_hierarchy(f, K, 1, 1, pattern=pat).bound
    assert sparse == pytest.approx(dense, abs=1e-6)
    assert dense == pytest.approx(0.25, abs=1e-6)


def test_chain_quartic_valid_and_weaker():
    names = ["x1", "x2", "x3", "x4"]
    sp, x = _vars(names)
    f = sum((x[i] * x[i + 1] - 0.5) ** 2 + 0.1 * x[i] for i in range(3)) + x[3] ** 4
    box = {nm: (-1.0, 1.0) for nm in names}
    K = SemialgebraicSet(sp, [], [], box)
    pat = SparsityPattern((frozenset({0, 1}), frozenset({1, 2}), frozenset({2, 3})), 4).verified()
    sparse = solve_hierarchy(f, K, 2, 2, pattern=pat).bound
    dense = solve_hierarchy(f, K, 2, 2).bound
    pts = node_grid(Box.cube(4), 41)
    grid = float(f(pts).min())
    assert sparse <= dense + 1e-6
    assert sparse <= grid + 1e-6


def test_single_clique_identical_to_dense():
    sp, (a, b) = _vars(["a", "b"])
    K = SemialgebraicSet(sp, [1 - a ** 2 - b ** 2])
    f = a ** 3 - a * b
    one = SparsityPattern.dense(sp)
    p1 = build_sparse_moment_relaxation(f, K, 2, one).problem
    p2 = build_moment_relaxation(f, K, 2).problem
    assert p1.fingerprint() == p2.fingerprint()


def test_single_clique_value_approx_identical():
    sp = VariableSpace.from_blocks(["theta"], ["alpha"])
    th, al = Polynomial.variable(sp, "theta"), Polynomial.variable(sp, "alpha")
    S = SemialgebraicSet(sp, [1 - al ** 2])
    J = (th - al) ** 2
    a = build_sparse_value_approx(J, S, Box.cube(1), 2, SparsityPattern.dense(sp)).problem
    b = build_value_approx(J, S, Box.cube(1), 2).problem
    assert a.fingerprint() == b.fingerprint()


def test_cross_clique_constraint_is_rejected():
    sp, (a, b, c) = _vars(["a", "b", "c"])
    K = SemialgebraicSet(sp, [1 - a * c])
    pat = SparsityPattern((frozenset({0, 1}), frozenset({1, 2})), 3).verified()
    with pytest.raises(CoverageError, match="inequality 0"):
        build_sparse_moment_relaxation(a + b + c, K, 1, pat)


def test_cross_clique_objective_is_rejected():
    sp = VariableSpace.from_blocks(["theta"], ["u", "v"])
    th, u, v = (Polynomial.variable(sp, nm) for nm in ("theta", "u", "v"))
    S = SemialgebraicSet(sp, [], [], {"u": (-1.0, 1.0), "v": (-1.0, 1.0)})
    pat = SparsityPattern((frozenset({0, 1}), frozenset({0, 2})), 3).verified()
    with pytest.raises(CoverageError):
        build_sparse_value_approx(th * u * v, S, Box.cube(1), 2, pat)


def test_value_approx_needs_theta_in_every_clique():
    sp = VariableSpace.from_blocks(["theta"], ["u"])
    S = SemialgebraicSet(sp, [], [], {"u": (-1.0, 1.0)})
    pat = SparsityPattern((frozenset({0}), frozenset({1})), 2).verified()
    with pytest.raises(CoverageError, match="parameter"):
        build_sparse_value_approx(Polynomial.variable(sp, "u") ** 2, S, Box.cube(1), 1, pat)


def test_miso_value_approx_blocks_per_clique():
    inst = simulate_miso_static(0, N=5, subset=[1, 3], terms=[1, 3])
    prob = miso_robust_projection(inst)
    pat = prob.inner_pattern()
    asm = build_sparse_value_approx(prob.J, prob.S, Box.cube(2), 2, pat)
    per = {}
    for blk in asm.assembly.blocks:
        per[blk.clique] = per.get(blk.clique, 0) + 1
    assert sorted(per) == [0, 1, 2, 3, 4]
    assert len(set(per.values())) == 1
    assert len(asm.assembly.blocks) == 5 * per[0]
    vf = approximate_value_function(prob.J, prob.S, Box.cube(2), 2, pattern=pat)
    assert vf.residual <= 1e-6 * (1 + prob.J.max_abs_coef())


def test_sparse_value_approx_is_sum_of_sample_bounds():
    # with one clique per sample the stage-one program splits into independent single-sample programs
    inst = simulate_miso_static(0, N=2, subset=[3], terms=[3])
    prob = miso_robust_projection(inst)
    box = Box([-2.0], [2.0])
    sparse = approximate_value_function(prob.J, prob.S, box, 2, pattern=prob.inner_pattern())
    total = 0.0
    for t, e in enumerate(inst.residuals, start=1):
        sp = VariableSpace.from_blocks(["theta3"], [f"xi3_{t}"])
        et = e.restrict(sp)
        S = SemialgebraicSet(sp, [], [], {f"xi3_{t}": (-0.2, 0.2)})
        total += approximate_value_function(et * et, S, box, 2).objective_value
    assert sparse.objective_value == pytest.approx(total, abs=1e-6)
    dense = approximate_value_function(prob.J, prob.S, box, 2)
    assert dense.objective_value <= sparse.objective_value + 1e-6
