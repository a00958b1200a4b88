"""Correlative sparsity: running-intersection checks and clique-wise relaxations.

Cliques are supplied by the caller as sets of variable indices.  A constraint
is attached to the first clique that contains all of its variables.  Bounds on
a variable shared by every clique (the parameters, in practice) are attached
to every clique; other bounds go to the first clique holding the variable in
the moment relaxation and to every clique holding it in the value-function
program, where the certificate repair needs one per clique variable.
Overlapping cliques share moment rows automatically because rows are indexed
by monomials.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from ._putinar import (Assembly, CertificateAssembler, CoverageError, DegreeError, covering_clique, half_degree,
                       normalized)
from .moments import Box, moment_vector
from .poly_core import Polynomial, VariableSpace, basis_on, monomial_basis
from .sets import SemialgebraicSet


def verify_rip(cliques: Sequence[Iterable[int]]) -> tuple[bool, int | None]:
    """Check the running intersection property in the given order.

    Returns ``(True, None)`` or ``(False, k)`` where ``k`` is the 0-based index
    of the first clique whose overlap with the union of its predecessors is not
    contained in a single predecessor.
    """
    cl = [frozenset(c) for c in cliques]
    if not cl:
        raise ValueError("at least one clique is required")
    union = set(cl[0])
    for k in range(1, len(cl)):
        overlap = cl[k] & union
        if not any(overlap <= cl[s] for s in range(k)):
            return False, k
        union |= cl[k]
    return True, None


@dataclass(frozen=True)
class SparsityPattern:
    cliques: tuple[frozenset[int], ...]
    n_vars: int
    rip_valid: bool = False

    def __post_init__(self):
        cl = tuple(frozenset(int(i) for i in c) for c in self.cliques)
        object.__setattr__(self, "cliques", cl)
        if not cl:
            raise ValueError("a sparsity pattern needs at least one clique")
        covered = set().union(*cl)
        if covered != set(range(self.n_vars)):
            missing = sorted(set(range(self.n_vars)) - covered)
            raise ValueError(f"cliques do not cover variables {missing}")

    @classmethod
    def dense(cls, space: VariableSpace) -> "SparsityPattern":
        return cls((frozenset(range(space.n)),), space.n, True)

    @classmethod
    def from_names(cls, space: VariableSpace, cliques: Sequence[Sequence[str]]) -> "SparsityPattern":
        return cls(tuple(frozenset(space.index(nm) for nm in c) for c in cliques), space.n).verified()

    def verified(self) -> "SparsityPattern":
        ok, _ = verify_rip(self.cliques)
        return SparsityPattern(self.cliques, self.n_vars, ok)

    def names(self, space: VariableSpace) -> list[list[str]]:
        return [[space.names[i] for i in sorted(c)] for c in self.cliques]

    def restricted(self, src: VariableSpace, dst: VariableSpace) -> "SparsityPattern":
        """Project cliques given over ``src`` onto the variables of ``dst`` (matched by name)."""
        out: list[frozenset[int]] = []
        for c in self.cliques:
            sub = frozenset(dst.index(src.names[i]) for i in c if src.names[i] in dst.names)
            if sub and sub not in out:
                out.append(sub)
        return SparsityPattern(tuple(out), dst.n).verified()


def _pattern_for(space: VariableSpace, pattern: SparsityPattern | None) -> list[frozenset[int]]:
    if pattern is None:
        return [frozenset(range(space.n))]
    if pattern.n_vars != space.n:
        raise ValueError("sparsity pattern and polynomial space differ in size")
    if not pattern.rip_valid:
        ok, k = verify_rip(pattern.cliques)
        if not ok:
            raise ValueError(f"cliques violate the running intersection property at clique {k}")
    return list(pattern.cliques)


def _bound_targets(i: int, cliques: list[frozenset[int]], every: bool = False) -> list[int]:
    holders = [k for k, c in enumerate(cliques) if i in c]
    return holders if (every or len(holders) == len(cliques)) else holders[:1]


@dataclass
class ValueApproxAssembly:
    """SOS program for the value-function upper bound plus the maps needed to read it back."""
    assembly: Assembly
    space: VariableSpace
    box: Box
    tau: int
    shift: np.ndarray
    scale: np.ndarray
    J_scale: float
    lambda_basis: list
    lambda_first: int
    scaled_J: Polynomial
    scaled_ineqs: list[Polynomial] = field(default_factory=list)
    scaled_eqs: list[Polynomial] = field(default_factory=list)

    @property
    def problem(self):
        return self.assembly.problem


def build_sparse_value_approx(J: Polynomial, S: SemialgebraicSet, box: Box, tau: int,
                              pattern: SparsityPattern | None = None) -> ValueApproxAssembly:
    """Assemble the SOS program whose solution is a degree-2*tau upper bound of max_S J.

    The identity enforced coefficient-wise (in coordinates where the box and
    every bounded uncertainty variable range over [-1, 1], and J has unit
    max-abs coefficient) is::

        sum_b lam_b s^b - J = sum_c sigma0_c + sum_mu sigma_mu d_mu
                              + sum_{c,k} psi_{c,k} (1 - s_k^2) + sum_j q_j h_j

    and the objective is sum_b lam_b gamma_b with gamma the uniform moments.
    """
    space = J.space
    if S.space != space:
        raise ValueError("J and S must share a variable space")
    ell = space.theta_count
    if box.dim != ell:
        raise ValueError(f"box has dimension {box.dim}, expected {ell} parameters")
    if tau < 1:
        raise DegreeError("tau must be >= 1")
    if J.degree() > 2 * tau:
        raise DegreeError(f"2*tau = {2 * tau} is below deg J = {J.degree()}")
    for k, p in enumerate(S.inequalities + S.equalities):
        if p.degree() > 2 * tau:
            raise DegreeError(f"constraint {k} has degree {p.degree()} > 2*tau = {2 * tau}")
    cliques = _pattern_for(space, pattern)
    theta = set(range(ell))
    for k, c in enumerate(cliques):
        if not theta <= c:
            raise CoverageError(f"clique {k} does not contain every parameter variable")

    n = space.n
    shift = np.zeros(n)
    scale = np.ones(n)
    shift[:ell] = box.center
    scale[:ell] = box.half_width
    for nm, (lo, hi) in S.bounds.items():
        i = space.index(nm)
        if i >= ell and hi > lo:
            shift[i] = 0.5 * (lo + hi)
            scale[i] = 0.5 * (hi - lo)
    Jn, J_scale = normalized(J.substitute_affine(shift, scale))
    ineqs = [normalized(g.substitute_affine(shift, scale))[0] for g in S.inequalities]
    eqs = [normalized(h.substitute_affine(shift, scale))[0] for h in S.equalities]
    one = Polynomial.constant(space, 1.0)

    cert = CertificateAssembler(space)
    lam_basis = monomial_basis(space, 2 * tau, "theta-only")
    gamma = moment_vector(Box.cube(ell), 2 * tau)
    costs = [gamma.values[b[:ell]] for b in lam_basis]
    lam_first = cert.add_free_multiplier(one, lam_basis, 1.0, "lambda", -1, "lambda", costs=costs)
    for c, cl in enumerate(cliques):
        cert.add_gram(one, basis_on(n, cl, tau), -1.0, "sigma0", c, f"sigma0[{c}]")
        for k in range(ell):
            s_k = Polynomial.variable(space, k)
            cert.add_gram(1.0 - s_k * s_k, basis_on(n, cl, tau - 1), -1.0, "psi", c, f"box {space.names[k]}")
    for mu, g in enumerate(ineqs):
        c = covering_clique(g.variables(), cliques)
        if c < 0:
            raise CoverageError(f"inequality {mu} is not covered by any clique")
        cert.add_gram(g, basis_on(n, cliques[c], tau - half_degree(g)), -1.0, "sigma", c, f"inequality {mu}")
    for i, bp in S.bound_polynomials():
        bp, _ = normalized(bp.substitute_affine(shift, scale))  # (1 - s_i^2) up to scale once rescaled
        for c in _bound_targets(i, cliques, every=True):
            cert.add_gram(bp, basis_on(n, cliques[c], tau - 1), -1.0, "bound", c, f"bound {space.names[i]}")
    for j, h in enumerate(eqs):
        c = covering_clique(h.variables(), cliques)
        if c < 0:
            raise CoverageError(f"equality {j} is not covered by any clique")
        cert.add_free_multiplier(h, basis_on(n, cliques[c], 2 * tau - h.degree()), -1.0, "eq", c, f"equality {j}")
    cert.add_rhs(Jn, "objective")
    assembly = cert.build({"stage": "value_approx", "tau": tau, "cliques": len(cliques)})
    return ValueApproxAssembly(assembly, space, box, tau, shift, scale, J_scale, lam_basis, lam_first, Jn,
                               ineqs, eqs)


@dataclass
class MomentRelaxation:
    """Moment relaxation of ``min f`` over ``K`` posed through its SOS dual.

    The SDP maximizes ``gamma`` subject to ``f - gamma = sum sigma0_c +
    sum sigma_j g_j + sum q_j h_j``; the dual multipliers of its rows are the
    negated moments ``z``.  Hence the dual slack of clique ``c``'s ``sigma0``
    block is the moment matrix ``M_t(z)`` on that clique and the slacks of the
    other blocks are localizing matrices.
    """
    assembly: Assembly
    space: VariableSpace
    t: int
    f_scale: float
    cliques: list[frozenset[int]]
    clique_r: list[int]

    @property
    def problem(self):
        return self.assembly.problem


def build_sparse_moment_relaxation(f: Polynomial, K: SemialgebraicSet, t: int,
                                   pattern: SparsityPattern | None = None) -> MomentRelaxation:
    space = f.space
    if K.space != space:
        raise ValueError("f and K must share a variable space")
    if 2 * t < f.degree():
        raise DegreeError(f"2t = {2 * t} is below deg f = {f.degree()}")
    for k, p in enumerate(K.inequalities + K.equalities):
        if p.degree() > 2 * t:
            raise DegreeError(f"constraint {k} has degree {p.degree()} > 2t = {2 * t}")
    if K.bounds and 2 * t < 2:
        raise DegreeError("box constraints need t >= 1")
    cliques = _pattern_for(space, pattern)
    n = space.n
    fn, f_scale = normalized(f)
    one = Polynomial.constant(space, 1.0)
    cert = CertificateAssembler(space)
    cert.add_free_multiplier(one, [(0,) * n], 1.0, "gamma", -1, "gamma", costs=[-1.0])
    clique_r = [1] * len(cliques)
    for c, cl in enumerate(cliques):
        cert.add_gram(one, basis_on(n, cl, t), 1.0, "moment", c, f"moment[{c}]")
    for j, g in enumerate(K.inequalities):
        g, _ = normalized(g)
        c = covering_clique(g.variables(), cliques)
        if c < 0:
            raise CoverageError(f"inequality {j} is not covered by any clique")
        r = max(1, half_degree(g))
        clique_r[c] = max(clique_r[c], r)
        cert.add_gram(g, basis_on(n, cliques[c], t - half_degree(g)), 1.0, "localizing", c, f"inequality {j}")
    for i, bp in K.bound_polynomials():
        bp, _ = normalized(bp)
        for c in _bound_targets(i, cliques):
            cert.add_gram(bp, basis_on(n, cliques[c], t - 1), 1.0, "bound", c, f"bound {space.names[i]}")
    for j, h in enumerate(K.equalities):
        h, _ = normalized(h)
        c = covering_clique(h.variables(), cliques)
        if c < 0:
            raise CoverageError(f"equality {j} is not covered by any clique")
        clique_r[c] = max(clique_r[c], half_degree(h))
        cert.add_free_multiplier(h, basis_on(n, cliques[c], 2 * t - h.degree()), 1.0, "eq", c, f"equality {j}")
    cert.add_rhs(fn, "objective")
    assembly = cert.build({"stage": "moment", "t": t, "cliques": len(cliques)})
    return MomentRelaxation(assembly, space, t, f_scale, cliques, clique_r)
