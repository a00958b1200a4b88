"""Eliminate variables that are pinned down by a single affine equality.

A variable ``v`` qualifies when some equality reads ``h = c*v + r(x)`` with a
constant ``c != 0``, ``r`` free of ``v``, and ``v`` appears nowhere else except
in its own bounds.  Then ``v = -r/c`` on the set, the equality is dropped and
the bounds ``lo <= v <= hi`` become two inequalities in the other variables.

Equalities remove the interior of the moment cone, which makes the SOS side
of the relaxations unattained and the interior-point iterates diverge; this
substitution is exact and keeps every constraint degree unchanged.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .poly_core import Polynomial, VariableSpace
from .sets import SemialgebraicSet
from .sparsity import SparsityPattern

COEF_TOL = 1e-9


@dataclass
class Elimination:
    source: VariableSpace
    space: VariableSpace
    solved: dict[str, Polynomial] = field(default_factory=dict)  # name -> expression over ``space``

    @property
    def trivial(self) -> bool:
        return not self.solved

    def reduce(self, p: Polynomial) -> Polynomial:
        """Move a polynomial that does not involve eliminated variables to the reduced space."""
        return p.restrict(self.space)

    def pattern(self, pattern: SparsityPattern | None) -> SparsityPattern | None:
        return None if pattern is None else pattern.restricted(self.source, self.space)

    def lift(self, points) -> np.ndarray:
        """Complete reduced-space points with the eliminated coordinates."""
        pts = np.asarray(points, dtype=float)
        single = pts.ndim == 1
        pts = np.atleast_2d(pts)
        out = np.zeros((len(pts), self.source.n))
        for j, nm in enumerate(self.space.names):
            out[:, self.source.index(nm)] = pts[:, j]
        for nm, expr in self.solved.items():
            out[:, self.source.index(nm)] = np.atleast_1d(expr(pts))
        return out[0] if single else out


def _solvable_var(h: Polynomial, others: list[Polynomial], protect: set[int]) -> tuple[int, float] | None:
    busy = set(protect)
    for q in others:
        busy |= q.variables()
    scale = h.max_abs_coef()
    for i in sorted(h.variables() - busy):
        touching = [(e, c) for e, c in h.items() if e[i]]
        if len(touching) != 1:
            continue
        e, c = touching[0]
        if sum(e) == 1 and abs(c) > COEF_TOL * scale:
            return i, c
    return None


def eliminate_affine_equalities(K: SemialgebraicSet, protect: Iterable[str] = (),
                                objective: Polynomial | None = None) -> tuple[Elimination, SemialgebraicSet]:
    """Return the elimination map and the equivalent set over the remaining variables.

    Variables named in ``protect``, the parameter block and anything the
    objective uses are never eliminated.
    """
    space = K.space
    keep = {space.index(nm) for nm in protect} | set(range(space.theta_count))
    if objective is not None:
        keep |= objective.variables()
    ineqs = list(K.inequalities)
    eqs = list(K.equalities)
    picks: list[tuple[int, Polynomial, float]] = []
    remaining = []
    for j, h in enumerate(eqs):
        others = ineqs + remaining + eqs[j + 1:] + [p for _, p, _ in picks]
        hit = _solvable_var(h, others, keep)
        if hit is None:
            remaining.append(h)
        else:
            picks.append((hit[0], h, hit[1]))
            keep.add(hit[0])
    if not picks:
        return Elimination(space, space), K

    gone = {i for i, _, _ in picks}
    theta = list(space.theta_names)
    alpha = [nm for i, nm in enumerate(space.names) if i >= space.theta_count and i not in gone]
    reduced = VariableSpace.from_blocks(theta, alpha)
    solved: dict[str, Polynomial] = {}
    new_ineqs = [g.restrict(reduced) for g in ineqs]
    for i, h, c in picks:
        nm = space.names[i]
        e = tuple(int(k == i) for k in range(space.n))
        rest = h - Polynomial.monomial(space, e, c)
        expr = (rest * (-1.0 / c)).restrict(reduced)
        solved[nm] = expr
        if nm in K.bounds:
            lo, hi = K.bounds[nm]
            new_ineqs += [expr - lo, hi - expr]
    bounds = {nm: b for nm, b in K.bounds.items() if nm not in solved}
    new_eqs = [h.restrict(reduced) for h in remaining]
    reduced_set = SemialgebraicSet(reduced, new_ineqs, new_eqs, bounds, not (new_ineqs or new_eqs or bounds))
    return Elimination(space, reduced, solved), reduced_set
