"""Axis-aligned outer box of a semialgebraic set from moment lower bounds."""
from __future__ import annotations

import numpy as np

from .lasserre_hierarchy import min_order, solve_hierarchy
from .moments import Box
from .poly_core import Polynomial
from .sdp_solver import NEAR_OPTIMAL, OPTIMAL, SolverFailure, SolverSettings
from .sets import SemialgebraicSet
from .sparsity import SparsityPattern

DEFAULT_PAD = 1e-3
DIVERGED = 1e8


class UnboundedCoordinateError(ValueError):
    pass


def outer_box(M: SemialgebraicSet, t: int | None = None, padding=None, pattern: SparsityPattern | None = None,
              settings: SolverSettings | None = None, names=None) -> Box:
    """Box containing ``M`` in the parameter coordinates (or in ``names``).

    Each edge is a moment lower bound of ``+-x_k`` over ``M``, so the box
    contains ``M`` up to solver accuracy.  ``padding`` defaults to
    ``1e-3 * edge length``; a scalar or per-coordinate value overrides it.
    """
    space = M.space
    names = list(names) if names is not None else list(space.theta_names or space.names)
    t = max(min_order(Polynomial.constant(space, 0.0), M), 1) if t is None else t
    used = set(M.bounds)
    for g in M.inequalities + M.equalities:
        used |= {space.names[i] for i in g.variables()}
    for nm in names:
        if nm not in used:
            raise UnboundedCoordinateError(f"coordinate {nm!r} is unconstrained")
    lo = np.empty(len(names))
    hi = np.empty(len(names))
    for k, nm in enumerate(names):
        x = Polynomial.variable(space, nm)
        for sign, out in ((1.0, lo), (-1.0, hi)):
            try:
                res = solve_hierarchy(sign * x, M, t, t, settings, pattern, extract=False)
            except SolverFailure as exc:
                if exc.status in ("presumed_unbounded", "presumed_infeasible"):
                    raise UnboundedCoordinateError(f"coordinate {nm!r} looks unbounded ({exc.status})") from exc
                raise
            rec = res.records[-1]
            if rec.status not in (OPTIMAL, NEAR_OPTIMAL) or rec.bound is None or abs(rec.bound) > DIVERGED:
                raise UnboundedCoordinateError(f"coordinate {nm!r}: relaxation value diverged")
            out[k] = sign * rec.bound
    if np.any(hi < lo - 1e-7 * (1 + np.abs(lo))):
        raise ValueError("outer box collapsed: the set looks empty")
    hi = np.maximum(hi, lo)
    edge = hi - lo
    pad = DEFAULT_PAD * edge if padding is None else np.broadcast_to(np.asarray(padding, dtype=float), lo.shape)
    return Box(lo - pad, hi + pad)
