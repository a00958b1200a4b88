"""Stage one: a polynomial upper bound of the parametric maximum ``max_{a in S} J(theta, a)``.

The bound is the lowest-mean polynomial (under the uniform measure on a box
containing the parameters of interest) that dominates ``J`` on ``box x S``,
with domination certified by a Putinar-type SOS identity of fixed degree.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._putinar import BlockInfo, DegreeError, FreeGroup, gram_form
from .moments import Box, moment_vector
from .poly_core import Polynomial, VariableSpace, add_exps
from .presolve import eliminate_affine_equalities
from .sdp_solver import NUMERICAL_FAILURE, SdpSolution, SolverFailure, SolverSettings, solve
from .sets import SemialgebraicSet
from .sparsity import SparsityPattern, ValueApproxAssembly, build_sparse_value_approx

CERTIFICATE_TOL = 1e-6


def default_tau(J: Polynomial) -> int:
    return (J.degree() + 1) // 2 + 1


@dataclass
class Certificate:
    """Gram matrices and multiplier coefficients, in the unit-box frame with ``J`` normalized."""
    lam: Polynomial
    target: Polynomial
    grams: list[tuple[BlockInfo, np.ndarray]]
    multipliers: list[tuple[FreeGroup, np.ndarray]]
    J_scale: float

    def rhs(self) -> Polynomial:
        space = self.target.space
        out = Polynomial.zero(space)
        for info, G in self.grams:
            out = out + info.weight * gram_form(info.basis, G, space)
        for group, q in self.multipliers:
            mult = Polynomial(space, {e: float(c) for e, c in zip(group.basis, q)})
            out = out + group.weight * mult
        return out

    def reconstruct(self) -> tuple[Polynomial, Polynomial]:
        """Both sides of the certified identity: ``(sum lam s^b - J, SOS combination)``."""
        return self.lam - self.target, self.rhs()

    def residual(self) -> float:
        lhs, rhs = self.reconstruct()
        return (lhs - rhs).max_abs_coef() * self.J_scale


@dataclass
class ValueFunctionApprox:
    tau: int
    polynomial: Polynomial
    certificate: Certificate
    objective_value: float
    box: Box
    residual: float
    status: str
    solver: dict = field(default_factory=dict)

    def __call__(self, theta):
        return self.polynomial(theta)

    @property
    def space(self) -> VariableSpace:
        return self.polynomial.space


def _pairs_by_sum(basis: list) -> dict:
    out: dict = {}
    for a, ea in enumerate(basis):
        for b, eb in enumerate(basis):
            out.setdefault(add_exps(ea, eb), []).append((a, b))
    return out


def _is_unit_bound(w: Polynomial, i: int, tol: float = 1e-12) -> bool:
    n = w.space.n
    sq = tuple(2 if k == i else 0 for k in range(n))
    rest = {e: c for e, c in w.items() if e not in (sq, (0,) * n)}
    return (abs(w.coefficient((0,) * n) - 1.0) <= tol and abs(w.coefficient(sq) + 1.0) <= tol
            and all(abs(c) <= tol for c in rest.values()))


def repair_certificate(cert: Certificate, ell: int) -> tuple[Certificate, float] | None:
    """Make the identity hold to rounding error, keeping every Gram matrix PSD.

    Parameter-only residual monomials go into ``lam``.  The rest is written
    into a ``sigma0`` Gram (least-norm over the entries producing each
    monomial).  If that Gram loses definiteness it is shifted by ``delta*I``,
    which is paid for exactly through the box multipliers, using
    ``1 - x^(2a) = sum_j (x_1...x_{j-1})^2 (1 - x_j^2)``, and a constant
    ``delta * len(basis)`` added to ``lam``.  The bound only gets looser by
    that constant.  Returns ``None`` when some needed multiplier is missing.
    """
    space = cert.target.space
    zero = (0,) * space.n
    lhs, rhs = cert.reconstruct()
    r = lhs - rhs
    lam = dict(cert.lam.items())
    grams = [(info, X.copy()) for info, X in cert.grams]
    sig = [k for k, (info, _) in enumerate(grams) if info.kind == "sigma0"]
    pairs = {k: _pairs_by_sum(grams[k][0].basis) for k in sig}
    touched = set()
    for e, c in r.items():
        if not any(e[ell:]):
            lam[e] = lam.get(e, 0.0) - c
            continue
        k = next((k for k in sig if e in pairs[k]), None)
        if k is None:
            return None
        pr = pairs[k][e]
        X = grams[k][1]
        for a, b in pr:
            X[a, b] += c / len(pr)
        touched.add(k)

    shift_total = 0.0
    for k in sorted(touched):
        info, X = grams[k]
        X[:] = 0.5 * (X + X.T)
        low = float(np.linalg.eigvalsh(X)[0])
        if low >= 0.0:
            continue
        delta = -low * (1.0 + 1e-6) + 1e-15
        # box multipliers of this clique, indexed by variable
        boxes = {}
        for j, (bi, _) in enumerate(grams):
            if bi.kind in ("psi", "bound") and bi.clique == info.clique:
                var = next(iter(bi.weight.variables()), None)
                if var is not None and _is_unit_bound(bi.weight, var) and var not in boxes:
                    boxes[var] = (j, {e: a for a, e in enumerate(bi.basis)})
        for a, e in enumerate(info.basis):
            X[a, a] += delta
            prefix = [0] * space.n
            for i, power in enumerate(e):
                for _ in range(power):
                    if i not in boxes:
                        return None
                    j, index = boxes[i]
                    pos = index.get(tuple(prefix))
                    if pos is None:
                        return None
                    grams[j][1][pos, pos] += delta
                    prefix[i] += 1
        lam[zero] = lam.get(zero, 0.0) + delta * len(info.basis)
        shift_total += delta * len(info.basis)
    fixed = Certificate(Polynomial(space, lam), cert.target, grams, cert.multipliers, cert.J_scale)
    return fixed, shift_total


def build_value_approx(J: Polynomial, S: SemialgebraicSet, box: Box, tau: int) -> ValueApproxAssembly:
    """Dense assembly: the clique-wise builder with a single clique holding every variable."""
    return build_sparse_value_approx(J, S, box, tau, None)


def _solver_info(sol: SdpSolution, assembly: ValueApproxAssembly) -> dict:
    P = assembly.problem
    return {"status": sol.status, "iterations": sol.iterations, "seconds": sol.seconds,
            "primal_objective": sol.primal_objective, "dual_objective": sol.dual_objective,
            "residuals": dict(sol.residuals), "rows": P.m, "blocks": len(P.block_sizes),
            "largest_block": max(P.block_sizes, default=0), "free": P.n_free}


def approximate_value_function(J: Polynomial, S: SemialgebraicSet, box: Box, tau: int | None = None,
                               settings: SolverSettings | None = None,
                               pattern: SparsityPattern | None = None, presolve: bool = True) -> ValueFunctionApprox:
    tau = default_tau(J) if tau is None else int(tau)
    settings = settings or SolverSettings()
    if presolve and S.equalities:
        # the certificate then lives over the variables left after elimination
        elim, S = eliminate_affine_equalities(S, objective=J)
        J = elim.reduce(J)
        pattern = elim.pattern(pattern)
    va = build_sparse_value_approx(J, S, box, tau, pattern)
    sol = solve(va.problem, settings=settings)
    if not sol.usable:
        raise SolverFailure("value-function SDP did not converge", sol.status, "value_approx", sol)

    space = va.space
    ell = space.theta_count
    lam_vals = sol.free_values[va.lambda_first: va.lambda_first + len(va.lambda_basis)]
    lam = Polynomial(space, {e: float(c) for e, c in zip(va.lambda_basis, lam_vals)})
    grams = [(info, X) for info, X in zip(va.assembly.blocks, sol.primal_blocks)]
    mults = [(g, sol.free_values[g.first: g.first + len(g.basis)]) for g in va.assembly.free_groups
             if g.kind != "lambda"]
    cert = Certificate(lam, va.scaled_J, grams, mults, va.J_scale)
    residual = cert.residual()
    info = _solver_info(sol, va)
    tol = CERTIFICATE_TOL * (1.0 + va.J_scale)
    if residual > tol:
        fixed = repair_certificate(cert, ell)
        if fixed is not None and fixed[0].residual() <= tol:
            info["repair"] = {"raw_residual": residual, "shift": fixed[1] * va.J_scale}
            cert = fixed[0]
            residual = cert.residual()
    if residual > tol:
        raise SolverFailure(f"certificate residual {residual:.2e} too large", NUMERICAL_FAILURE, "value_approx", sol)

    tspace = space.theta_space()
    unit_poly = cert.lam.restrict(tspace) * va.J_scale
    h = box.half_width
    poly = unit_poly.substitute_affine(-box.center / h, 1.0 / h)
    gamma = moment_vector(Box.cube(ell), 2 * tau).values
    objective = va.J_scale * sum(c * gamma[e[:ell]] for e, c in cert.lam.items())
    return ValueFunctionApprox(tau, poly, cert, float(objective), box, float(residual), sol.status, info)


def l1_gap(approx: ValueFunctionApprox, thetas, oracle_values, weights=None) -> float:
    """Quadrature estimate of the mean absolute gap under the uniform measure on the box.

    ``thetas`` should be a cell-centered grid; without ``weights`` every cell
    gets the same weight (cell measure over box measure).
    """
    vals = np.atleast_1d(approx(np.atleast_2d(thetas)))
    ref = np.asarray(oracle_values, dtype=float)
    if vals.shape != ref.shape:
        raise ValueError("oracle values do not match the grid")
    w = np.full(len(ref), 1.0 / len(ref)) if weights is None else np.asarray(weights, dtype=float)
    return float(np.sum(w * np.abs(vals - ref)))


def write_surface_csv(path, thetas, approx_values, oracle_values=None, names=None):
    thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
    names = list(names) if names is not None else [f"theta{k + 1}" for k in range(thetas.shape[1])]
    header = names + ["approx"] + (["oracle"] if oracle_values is not None else [])
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for k, row in enumerate(thetas):
            rec = [repr(float(v)) for v in row] + [repr(float(approx_values[k]))]
            if oracle_values is not None:
                rec.append(repr(float(oracle_values[k])))
            w.writerow(rec)


__all__ = ["Certificate", "DegreeError", "ValueFunctionApprox", "approximate_value_function", "build_value_approx",
           "default_tau", "l1_gap", "write_surface_csv"]
