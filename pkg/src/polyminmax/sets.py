"""Basic semialgebraic sets ``{x : g_i(x) >= 0, h_j(x) = 0}``."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .moments import Box
from .poly_core import Polynomial, SpaceMismatchError, VariableSpace


@dataclass(frozen=True)
class SemialgebraicSet:
    """Inequalities ``g >= 0`` and equalities ``h = 0`` over one variable space.

    ``bounds`` is an optional a-priori box ``{name: (lo, hi)}``.  It is part of
    the description: relaxations add ``(hi - x)(x - lo) >= 0`` for every bounded
    variable, and the brute-force oracle grids over it.  A set with no
    constraints must be created through :meth:`entire_space`.
    """

    space: VariableSpace
    inequalities: tuple[Polynomial, ...] = ()
    equalities: tuple[Polynomial, ...] = ()
    bounds: Mapping[str, tuple[float, float]] = field(default_factory=dict)
    entire: bool = False

    def __post_init__(self):
        object.__setattr__(self, "inequalities", tuple(self.inequalities))
        object.__setattr__(self, "equalities", tuple(self.equalities))
        object.__setattr__(self, "bounds", {k: (float(v[0]), float(v[1])) for k, v in dict(self.bounds).items()})
        for p in self.inequalities + self.equalities:
            if p.space != self.space:
                raise SpaceMismatchError("constraint polynomial lives in a different space")
        for name, (lo, hi) in self.bounds.items():
            self.space.index(name)
            if not lo <= hi:
                raise ValueError(f"bound for {name!r} has lo > hi")
        if not (self.inequalities or self.equalities or self.bounds or self.entire):
            raise ValueError("empty description: use SemialgebraicSet.entire_space for R^n")

    @classmethod
    def entire_space(cls, space: VariableSpace, bounds=None) -> "SemialgebraicSet":
        return cls(space, (), (), bounds or {}, True)

    @classmethod
    def from_box(cls, space: VariableSpace, box: Box, names: Sequence[str] | None = None) -> "SemialgebraicSet":
        names = names or space.names[: box.dim]
        return cls(space, (), (), {nm: (lo, hi) for nm, lo, hi in zip(names, box.lower, box.upper)})

    @property
    def n_constraints(self) -> int:
        return len(self.inequalities) + len(self.equalities)

    def bound_polynomials(self) -> list[tuple[int, Polynomial]]:
        """``(variable index, (hi - x)(x - lo))`` for each bounded variable, in space order."""
        out = []
        for i, nm in enumerate(self.space.names):
            if nm in self.bounds:
                lo, hi = self.bounds[nm]
                x = Polynomial.variable(self.space, i)
                out.append((i, (hi - x) * (x - lo)))
        return out

    def bounds_box(self, names: Sequence[str] | None = None) -> Box:
        names = list(names) if names is not None else list(self.space.names)
        missing = [nm for nm in names if nm not in self.bounds]
        if missing:
            raise ValueError(f"no a-priori bounds for {missing}")
        return Box([self.bounds[nm][0] for nm in names], [self.bounds[nm][1] for nm in names])

    def with_bounds(self, bounds: Mapping[str, tuple[float, float]]) -> "SemialgebraicSet":
        merged = dict(self.bounds)
        merged.update(bounds)
        return SemialgebraicSet(self.space, self.inequalities, self.equalities, merged, self.entire)

    def with_constraints(self, inequalities=(), equalities=()) -> "SemialgebraicSet":
        return SemialgebraicSet(self.space, self.inequalities + tuple(inequalities),
                                self.equalities + tuple(equalities), self.bounds, self.entire)

    def max_degree(self) -> int:
        degs = [p.degree() for p in self.inequalities + self.equalities]
        if self.bounds:
            degs.append(2)
        return max(degs, default=0)

    def depends_on_theta(self) -> bool:
        if any(p.depends_on_theta() for p in self.inequalities + self.equalities):
            return True
        return any(nm in self.bounds for nm in self.space.theta_names)

    # membership
    def residuals(self, points, include_bounds: bool = True) -> np.ndarray:
        """Largest constraint violation at each point (0 when feasible)."""
        X = np.atleast_2d(np.asarray(points, dtype=float))
        viol = np.zeros(X.shape[0])
        for g in self.inequalities:
            viol = np.maximum(viol, np.maximum(0.0, -np.atleast_1d(g(X))))
        for h in self.equalities:
            viol = np.maximum(viol, np.abs(np.atleast_1d(h(X))))
        if include_bounds:
            for nm, (lo, hi) in self.bounds.items():
                xi = X[:, self.space.index(nm)]
                viol = np.maximum(viol, np.maximum(lo - xi, xi - hi))
        return viol

    def contains(self, point, tol: float = 1e-9) -> bool:
        return bool(self.residuals(point)[0] <= tol)

    # transformations
    def embed(self, space: VariableSpace, mapping: Mapping[str, str] | None = None) -> "SemialgebraicSet":
        mapping = mapping or {}
        return SemialgebraicSet(space,
                                tuple(p.embed(space, mapping) for p in self.inequalities),
                                tuple(p.embed(space, mapping) for p in self.equalities),
                                {mapping.get(k, k): v for k, v in self.bounds.items()}, self.entire)

    def rescaled(self, shift, scale) -> "SemialgebraicSet":
        """Set in coordinates ``s`` with ``x = shift + scale * s``."""
        shift = np.broadcast_to(np.asarray(shift, dtype=float), (self.space.n,))
        scale = np.broadcast_to(np.asarray(scale, dtype=float), (self.space.n,))
        bounds = {}
        for nm, (lo, hi) in self.bounds.items():
            i = self.space.index(nm)
            a, b = (lo - shift[i]) / scale[i], (hi - shift[i]) / scale[i]
            bounds[nm] = (min(a, b), max(a, b))
        return SemialgebraicSet(self.space,
                                tuple(p.substitute_affine(shift, scale) for p in self.inequalities),
                                tuple(p.substitute_affine(shift, scale) for p in self.equalities),
                                bounds, self.entire)

    def to_record(self) -> dict:
        return {"ineq": [p.to_record() for p in self.inequalities],
                "eq": [p.to_record() for p in self.equalities]}
