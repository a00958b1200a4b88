import numpy as np
import pytest

from polyminmax.moments import Box
from polyminmax.oracle import cell_grid, grid_max, rejection_sample
from polyminmax.poly_core import Polynomial, VariableSpace
from polyminmax.sdp_solver import SolverFailure
from polyminmax.sets import SemialgebraicSet
from polyminmax.sos_relaxation import (Certificate, DegreeError, approximate_value_function, build_value_approx,
                                       default_tau, l1_gap, repair_certificate, write_surface_csv)

UNIT = Box([-1.0], [1.0])


def _toy():
    sp = VariableSpace.from_blocks(["theta"], ["alpha"])
    th, al = Polynomial.variable(sp, "theta"), Polynomial.variable(sp, "alpha")
    return sp, th, al, (th - al) ** 2, SemialgebraicSet(sp, [1 - al ** 2])


def test_default_tau():
    sp, th, al, J, _ = _toy()
    assert default_tau(J) == 2
    assert default_tau(J * th) == 3


def test_toy_assembly_counts():
    _, _, _, J, S = _toy()
    va = build_value_approx(J, S, UNIT, 1)
    assert va.problem.block_sizes == [3, 1, 1]  # sigma0 on {1, theta, alpha}, sigma1, psi
    assert va.problem.n_free == 3  # lambda_0, lambda_1, lambda_2
    assert va.problem.m == 6  # monomials of degree <= 2 in (theta, alpha)
    assert va.lambda_basis == [(0, 0), (1, 0), (2, 0)]


def test_degree_errors():
    _, _, _, J, S = _toy()
    with pytest.raises(DegreeError):
        build_value_approx(J * J, S, UNIT, 1)


def test_constant_objective():
    sp, _, _, _, S = _toy()
    vf = approximate_value_function(Polynomial.constant(sp, 2.5), S, UNIT, 2)
    assert vf.objective_value == pytest.approx(2.5, abs=1e-6)
    coefs = vf.polynomial.terms
    assert coefs.get((0,), 0.0) == pytest.approx(2.5, abs=1e-6)
    assert all(abs(c) <= 1e-6 for e, c in coefs.items() if e != (0,))


def test_toy_tau3_upper_bound_and_objective():
    _, _, _, J, S = _toy()
    vf = approximate_value_function(J, S, UNIT, 3)
    g = np.linspace(-1, 1, 101)
    excess = vf(g[:, None]) - (1 + np.abs(g)) ** 2
    assert excess.min() >= -1e-5
    assert excess.mean() <= 0.15
    assert vf.objective_value >= 7 / 3
    assert vf.polynomial.degree() <= 6
    assert vf.residual <= 1e-6 * (1 + J.max_abs_coef())
    lhs, rhs = vf.certificate.reconstruct()
    assert (lhs - rhs).max_abs_coef() * vf.certificate.J_scale <= 1e-6 * (1 + J.max_abs_coef())


def test_sampled_upper_bound():
    sp, _, _, J, S = _toy()
    vf = approximate_value_function(J, S, UNIT, 2)
    pts = rejection_sample(S, Box([-1.0, -1.1], [1.0, 1.1]), count=1000, seed=3).points
    assert len(pts) == 1000
    vals = J(pts)
    theta = pts[:, 0]
    assert np.all(vf(theta[:, None]) >= vals - 1e-5 * (1 + np.abs(vals)))


def test_objective_dominates_quadrature():
    _, _, _, J, S = _toy()
    vf = approximate_value_function(J, S, UNIT, 2)
    pts, w = cell_grid(UNIT, 400)
    integral = float(np.sum(w * (1 + np.abs(pts[:, 0])) ** 2))
    assert vf.objective_value >= integral - 1e-5


def test_equality_only_inner_set():
    sp, th, al, _, _ = _toy()
    J = th * al + al ** 2
    S = SemialgebraicSet(sp, [], [al - th])
    vf = approximate_value_function(J, S, UNIT, 2)
    g = np.linspace(-1, 1, 101)
    assert np.all(vf(g[:, None]) >= 2 * g ** 2 - 1e-6)


def test_single_point_inner_set():
    sp, th, al, J, _ = _toy()
    S = SemialgebraicSet(sp, [], [al])
    vf = approximate_value_function(J, S, UNIT, 2)
    g = np.linspace(-1, 1, 101)
    assert np.all(vf(g[:, None]) >= g ** 2 - 1e-6)


def test_theta_only_objective_is_tight():
    sp, th, al, _, S = _toy()
    J = th ** 2 - 0.5 * th
    vf = approximate_value_function(J, S, UNIT, 1)
    assert vf.objective_value - (1 / 3) <= 1e-6


def test_l1_gap_properties():
    _, _, _, J, S = _toy()
    pts, _ = cell_grid(UNIT, 200)
    ref = (1 + np.abs(pts[:, 0])) ** 2
    v1 = approximate_value_function(J, S, UNIT, 1)
    v3 = approximate_value_function(J, S, UNIT, 3)
    assert l1_gap(v3, pts, v3(pts)) == 0.0
    gap1, gap3 = l1_gap(v1, pts, ref), l1_gap(v3, pts, ref)
    assert gap3 < gap1
    # both approximations lie above the oracle, so a downward shift of the oracle adds exactly c
    assert l1_gap(v3, pts, ref - 0.25) == pytest.approx(gap3 + 0.25, abs=1e-12)
    with pytest.raises(ValueError):
        l1_gap(v3, pts, ref[:-1])


def test_grid_oracle_matches_analytic_value():
    _, _, _, J, S = _toy()
    S = S.with_bounds({"alpha": (-1.0, 1.0)})
    for t in (-0.7, 0.0, 0.4):
        assert grid_max(J, t, S, 1001).value == pytest.approx((1 + abs(t)) ** 2, abs=1e-9)


def _broken(cert, eps):
    """The same Gram matrices against an objective nudged by ``eps * alpha^2``."""
    sp = cert.target.space
    target = cert.target + eps * Polynomial.monomial(sp, (0, 2))
    return Certificate(cert.lam, target, [(i, X.copy()) for i, X in cert.grams], cert.multipliers, cert.J_scale)


def test_repair_keeps_grams_psd():
    _, _, _, J, S = _toy()
    S = S.with_bounds({"alpha": (-1.0, 1.0)})
    cert = approximate_value_function(J, S, UNIT, 2).certificate
    for eps in (1e-7, -1e-7, 1e-5):
        broken = _broken(cert, eps)
        assert broken.residual() > 1e-8
        fixed, shift = repair_certificate(broken, 1)
        assert fixed.residual() <= 1e-12
        assert shift >= 0.0
        for info, G in fixed.grams:
            assert np.linalg.eigvalsh(0.5 * (G + G.T))[0] >= -1e-12
        # the shift only raises the constant term of the bound
        diff = fixed.lam - cert.lam
        assert diff.coefficient((0, 0)) >= -1e-12


def test_repair_shift_is_paid_by_box_multipliers():
    _, _, _, J, S = _toy()
    S = S.with_bounds({"alpha": (-1.0, 1.0)})
    cert = approximate_value_function(J, S, UNIT, 2).certificate
    fixed, shift = repair_certificate(_broken(cert, 1e-3), 1)
    assert shift > 0.0
    assert fixed.residual() <= 1e-12
    assert all(np.linalg.eigvalsh(0.5 * (G + G.T))[0] >= -1e-12 for _, G in fixed.grams)


def test_failure_on_empty_inner_set():
    sp, _, al, J, _ = _toy()
    S = SemialgebraicSet(sp, [al - 2, 1 - al ** 2])
    with pytest.raises(SolverFailure):
        approximate_value_function(J, S, UNIT, 2)


def test_surface_csv(tmp_path):
    _, _, _, J, S = _toy()
    vf = approximate_value_function(J, S, UNIT, 1)
    g = np.linspace(-1, 1, 5)[:, None]
    write_surface_csv(tmp_path / "s.csv", g, vf(g), (1 + np.abs(g[:, 0])) ** 2, ["theta"])
    lines = (tmp_path / "s.csv").read_text().splitlines()
    assert lines[0] == "theta,approx,oracle" and len(lines) == 6
