"""Brute-force reference computations: grids, rejection sampling and quadrature.

Nothing here uses the SDP machinery.  Sets whose description contains
variables that are not gridded (lifting variables, e.g. noise samples of a
feasible parameter set) are handled by a linear program per grid point, which
requires those variables to enter affinely once the gridded ones are fixed.

Inner maximizations are split into independent pieces when the objective is a
sum of terms that share no uncertain variables and the constraints do not
couple them; the maximum of the sum is then the sum of the maxima.
"""
from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.optimize import linprog

from .moments import Box
from .poly_core import Polynomial, VariableSpace
from .sets import SemialgebraicSet

FEAS_TOL = 1e-9
LP_TOL = 1e-8
MAX_GRID_DIM = 4
MAX_POINTS = 4_000_000


class EmptyGridError(ValueError):
    """No grid point (or proposal) satisfies the constraints."""


def node_grid(box: Box, res: int) -> np.ndarray:
    """Tensor grid including the box corners, first coordinate varying slowest."""
    axes = [np.linspace(lo, hi, res) for lo, hi in zip(box.lower, box.upper)]
    return np.array(list(itertools.product(*axes))) if axes else np.zeros((1, 0))


def cell_grid(box: Box, res: int) -> tuple[np.ndarray, np.ndarray]:
    """Cell-centered tensor grid and its uniform quadrature weights."""
    axes = []
    for lo, hi in zip(box.lower, box.upper):
        h = (hi - lo) / res
        axes.append(lo + h * (np.arange(res) + 0.5))
    pts = np.array(list(itertools.product(*axes)))
    return pts, np.full(len(pts), 1.0 / len(pts))


def quadrature_moment(box: Box, beta, res: int = 10_000) -> float:
    """Midpoint-rule mean of ``x^beta`` over the box (one axis at a time)."""
    beta = np.asarray(beta, dtype=int)
    out = 1.0
    for k, (lo, hi) in enumerate(zip(box.lower, box.upper)):
        h = (hi - lo) / res
        x = lo + h * (np.arange(res) + 0.5)
        out *= float(np.mean(x ** beta[k]))
    return out


# ---------------------------------------------------------------------------
# membership with lifting variables


def _affine_split(p: Polynomial, lifts: list[int]) -> tuple[Polynomial, list[Polynomial]]:
    """``p = c(x) + sum_j a_j(x) z_j`` with ``z`` the lift variables; raises if ``p`` is not affine in ``z``."""
    space = p.space
    const: dict = {}
    coefs: list[dict] = [{} for _ in lifts]
    pos = {j: k for k, j in enumerate(lifts)}
    for e, c in p.items():
        deg = sum(e[j] for j in lifts)
        if deg == 0:
            const[e] = c
        elif deg == 1:
            j = next(j for j in lifts if e[j])
            ne = list(e)
            ne[j] = 0
            coefs[pos[j]][tuple(ne)] = c
        else:
            raise ValueError("constraint is not affine in the lifting variables")
    return Polynomial(space, const), [Polynomial(space, d) for d in coefs]


class _LiftedSet:
    """Membership test for the projection of ``S`` onto a subset of its variables."""

    def __init__(self, S: SemialgebraicSet, fixed: Sequence[int]):
        self.S = S
        self.space = S.space
        self.fixed = list(fixed)
        self.lifts = [i for i in range(self.space.n) if i not in set(self.fixed)]
        self.ineq = [_affine_split(g, self.lifts) for g in S.inequalities]
        self.eq = [_affine_split(h, self.lifts) for h in S.equalities]
        lo = np.full(len(self.lifts), -np.inf)
        hi = np.full(len(self.lifts), np.inf)
        self.fixed_bounds = []
        for nm, (a, b) in S.bounds.items():
            i = self.space.index(nm)
            if i in self.lifts:
                k = self.lifts.index(i)
                lo[k], hi[k] = a, b
            else:
                self.fixed_bounds.append((i, a, b))
        self.lo, self.hi = lo, hi

    def _coeffs(self, X: np.ndarray, parts):
        c = np.atleast_1d(parts[0](X))
        A = np.stack([np.atleast_1d(a(X)) if not a.is_zero() else np.zeros(len(X)) for a in parts[1]], axis=1) \
            if parts[1] else np.zeros((len(X), 0))
        return c, A

    def violations(self, fixed_values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Smallest achievable max-violation per point, and the lift attaining it."""
        V = np.atleast_2d(np.asarray(fixed_values, dtype=float))
        P = len(V)
        X = np.zeros((P, self.space.n))
        X[:, self.fixed] = V
        ineq = [self._coeffs(X, parts) for parts in self.ineq]
        eq = [self._coeffs(X, parts) for parts in self.eq]
        L = len(self.lifts)
        out = np.zeros(P)
        lifts = np.zeros((P, L))
        bounds = [(None if not np.isfinite(a) else a, None if not np.isfinite(b) else b)
                  for a, b in zip(self.lo, self.hi)] + [(0.0, None)]
        cost = np.zeros(L + 1)
        cost[-1] = 1.0
        for p in range(P):
            base = 0.0
            for i, a, b in self.fixed_bounds:
                base = max(base, a - X[p, i], X[p, i] - b)
            rows, rhs = [], []
            # -(c + a.z) <= s   ->   -a.z - s <= c
            for c, A in ineq:
                rows.append(np.append(-A[p], -1.0))
                rhs.append(c[p])
            for c, A in eq:
                rows.append(np.append(A[p], -1.0))
                rhs.append(-c[p])
                rows.append(np.append(-A[p], -1.0))
                rhs.append(c[p])
            if L == 0:
                viol = max([0.0] + [-c[p] for c, _ in ineq] + [abs(c[p]) for c, _ in eq])
                out[p] = max(base, viol)
                continue
            res = linprog(cost, A_ub=np.array(rows) if rows else None, b_ub=np.array(rhs) if rows else None,
                          bounds=bounds, method="highs")
            if res.status != 0:
                out[p] = np.inf
                continue
            out[p] = max(base, float(res.x[-1]))
            lifts[p] = res.x[:L]
        return out, lifts


def feasible_mask(S: SemialgebraicSet, names: Sequence[str], points, tol: float | None = None,
                  fixed: dict | None = None) -> np.ndarray:
    """Which rows of ``points`` (values of ``names``) lie in ``S`` or in its projection.

    ``fixed`` assigns values to further variables (e.g. parameters held
    constant).  Variables neither gridded nor fixed are lifts.
    """
    space = S.space
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    fixed = fixed or {}
    idx = [space.index(nm) for nm in names] + [space.index(nm) for nm in fixed]
    vals = np.hstack([pts, np.tile([fixed[k] for k in fixed], (len(pts), 1))]) if fixed else pts
    if len(set(idx)) == space.n:
        X = np.zeros((len(pts), space.n))
        X[:, idx] = vals
        return S.residuals(X) <= (FEAS_TOL if tol is None else tol)
    viol, _ = _LiftedSet(S, idx).violations(vals)
    return viol <= (LP_TOL if tol is None else tol)


def projected_violation(S: SemialgebraicSet, values: dict) -> tuple[float, dict]:
    """Least max-violation of ``S`` over the variables not in ``values``, and the lift achieving it."""
    space = S.space
    names = list(values)
    idx = [space.index(nm) for nm in names]
    ls = _LiftedSet(S, idx)
    viol, lift = ls.violations(np.array([[values[nm] for nm in names]]))
    return float(viol[0]), {space.names[j]: float(v) for j, v in zip(ls.lifts, lift[0])}


# ---------------------------------------------------------------------------
# inner maximum


def _components(J: Polynomial, S: SemialgebraicSet) -> list[tuple[list[int], Polynomial, list, list]]:
    """Split the uncertain block into groups not coupled by ``J`` terms or constraints."""
    space = J.space
    alpha = set(range(space.theta_count, space.n))
    parent = {i: i for i in alpha}

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    def join(vs):
        vs = [v for v in vs if v in alpha]
        for v in vs[1:]:
            parent[find(v)] = find(vs[0])

    for e, _ in J.items():
        join([i for i in alpha if e[i]])
    for p in S.inequalities + S.equalities:
        join(sorted(p.variables() & alpha))
    groups: dict[int, list[int]] = {}
    for i in sorted(alpha):
        groups.setdefault(find(i), []).append(i)
    out = []
    const = {e: c for e, c in J.items() if not any(e[i] for i in alpha)}
    for members in groups.values():
        ms = set(members)
        terms = {e: c for e, c in J.items() if any(e[i] for i in ms)}
        ineq = [g for g in S.inequalities if g.variables() & ms]
        eq = [h for h in S.equalities if h.variables() & ms]
        if terms or ineq or eq:
            out.append((members, Polynomial(space, terms), ineq, eq))
    if const:
        out.append(([], Polynomial(space, const), [], []))
    return out


@dataclass
class _InnerPiece:
    grid_idx: list[int]
    part: Polynomial
    points: np.ndarray
    step: np.ndarray


def _inner_pieces(J: Polynomial, S: SemialgebraicSet, res: int, box: dict | None) -> list[_InnerPiece]:
    space = J.space
    box = box or {}
    pieces = []
    for members, part, ineq, eq in _components(J, S):
        if not members:
            pieces.append(_InnerPiece([], part, np.zeros((1, 0)), np.zeros(0)))
            continue
        grid_idx = [i for i in members if part.variables() and i in part.variables()]
        if not grid_idx:
            continue  # constraints only: feasibility of this group does not change the maximum
        if len(grid_idx) > MAX_GRID_DIM:
            raise ValueError(f"inner grid would have {len(grid_idx)} dimensions (max {MAX_GRID_DIM})")
        names = [space.names[i] for i in grid_idx]
        lo, hi = [], []
        for nm in names:
            if nm in box:
                a, b = box[nm]
            elif nm in S.bounds:
                a, b = S.bounds[nm]
            else:
                raise ValueError(f"no bounds to grid variable {nm!r}")
            lo.append(a)
            hi.append(b)
        pts = node_grid(Box(lo, hi), res)
        if len(pts) > MAX_POINTS:
            raise ValueError(f"inner grid has {len(pts)} points (max {MAX_POINTS})")
        sub_bounds = {nm: S.bounds[nm] for nm in S.bounds if space.index(nm) in set(members)}
        sub = SemialgebraicSet(space, ineq, eq, sub_bounds, entire=True)
        lift_vars = [i for i in members if i not in grid_idx]
        theta = list(range(space.theta_count))
        if any(p.variables() & set(theta) for p in ineq + eq):
            raise ValueError("inner constraints depend on the parameters; the grid oracle needs them fixed")
        # restrict the membership problem to this group's variables
        if lift_vars or ineq or eq:
            gspace = VariableSpace.from_blocks([], [space.names[i] for i in members])
            gsub = SemialgebraicSet(gspace, [p.restrict(gspace) for p in ineq], [p.restrict(gspace) for p in eq],
                                    sub_bounds, entire=True)
            mask = feasible_mask(gsub, names, pts)
        else:
            mask = np.all((pts >= np.array(lo) - FEAS_TOL) & (pts <= np.array(hi) + FEAS_TOL), axis=1)
        pts = pts[mask]
        if len(pts) == 0:
            raise EmptyGridError(f"no feasible inner grid point for variables {names}")
        step = (np.array(hi) - np.array(lo)) / max(res - 1, 1)
        pieces.append(_InnerPiece(grid_idx, part, pts, step))
    return pieces


def _piece_max(piece: _InnerPiece, space: VariableSpace, thetas: np.ndarray, chunk: int = 2_000_000):
    """Max of the piece over its feasible grid for each parameter row; also the adjacent-difference error."""
    ell = space.theta_count
    T = len(thetas)
    k = len(piece.points)
    best = np.empty(T)
    arg = np.empty(T, dtype=np.int64)
    rows = max(1, chunk // max(k, 1))
    for s in range(0, T, rows):
        th = thetas[s:s + rows]
        X = np.zeros((len(th) * k, space.n))
        X[:, :ell] = np.repeat(th, k, axis=0)
        if piece.grid_idx:
            X[:, piece.grid_idx] = np.tile(piece.points, (len(th), 1))
        vals = np.atleast_1d(piece.part(X)).reshape(len(th), k)
        arg[s:s + rows] = np.argmax(vals, axis=1)
        best[s:s + rows] = vals[np.arange(len(th)), arg[s:s + rows]]
    return best, arg


@dataclass
class GridMax:
    value: float
    argmax: dict
    error: float
    feasible_points: int


def grid_max(J: Polynomial, theta, S: SemialgebraicSet, resolution: int = 1001, box: dict | None = None) -> GridMax:
    """Grid maximum of ``J(theta, .)`` over ``S``; ``box`` overrides bounds used for gridding."""
    space = J.space
    theta = np.atleast_1d(np.asarray(theta, dtype=float)).reshape(1, -1)
    if theta.shape[1] != space.theta_count:
        raise ValueError("theta has the wrong length")
    pieces = _inner_pieces(J, S, resolution, box)
    total = 0.0
    err = 0.0
    arg = {}
    for pc in pieces:
        v, a = _piece_max(pc, space, theta)
        total += float(v[0])
        if pc.grid_idx:
            x = pc.points[a[0]]
            arg.update({space.names[i]: float(xi) for i, xi in zip(pc.grid_idx, x)})
            err += _lipschitz_error(pc, space, theta[0], x)
    return GridMax(total, arg, err, int(sum(len(p.points) for p in pieces if p.grid_idx)))


def _lipschitz_error(pc: _InnerPiece, space: VariableSpace, theta, x) -> float:
    """Gradient norm at the grid argmax times the half diagonal of a grid cell."""
    X = np.zeros(space.n)
    X[: space.theta_count] = theta
    X[pc.grid_idx] = x
    g = np.array([pc.part.derivative(i)(X) for i in pc.grid_idx])
    hess_bound = 0.0
    for i in pc.grid_idx:
        for j in pc.grid_idx:
            hess_bound = max(hess_bound, abs(pc.part.derivative(i).derivative(j)(X)))
    h = 0.5 * float(np.linalg.norm(pc.step))
    return float(np.linalg.norm(g)) * h + 0.5 * hess_bound * len(pc.grid_idx) * h * h


@dataclass
class GridMinMax:
    theta: np.ndarray
    value: float
    error: float
    thetas: np.ndarray
    values: np.ndarray
    inner_points: int = 0
    extra: dict = field(default_factory=dict)


def grid_minmax(J: Polynomial, M: SemialgebraicSet | None, S: SemialgebraicSet, outer_res: int = 101,
                inner_res: int = 101, outer_box: Box | None = None, inner_box: dict | None = None,
                outer_mask=None) -> GridMinMax:
    """Grid min over ``M`` of the grid max over ``S``; ties go to the first point in grid order.

    ``outer_mask`` may pass a precomputed membership of the outer grid (it
    must correspond to ``node_grid(outer_box, outer_res)``).
    """
    space = J.space
    ell = space.theta_count
    if ell == 0:
        raise ValueError("no parameter variables")
    if ell > MAX_GRID_DIM:
        raise ValueError(f"refusing a {ell}-dimensional outer grid")
    theta_names = list(space.theta_names)
    if outer_box is None:
        if M is None:
            raise ValueError("an outer box or a bounded outer set is required")
        outer_box = Box(*zip(*[M.bounds[nm] for nm in _names_in(M, theta_names)]))
    thetas = node_grid(outer_box, outer_res)
    if outer_mask is None:
        outer_mask = np.ones(len(thetas), bool) if M is None else feasible_mask(M, theta_names, thetas)
    thetas_f = thetas[np.asarray(outer_mask, bool)]
    if len(thetas_f) == 0:
        raise EmptyGridError("no feasible outer grid point")
    pieces = _inner_pieces(J, S, inner_res, inner_box)
    vals = np.zeros(len(thetas_f))
    for pc in pieces:
        v, _ = _piece_max(pc, space, thetas_f)
        vals += v
    k = int(np.argmin(vals))
    th = thetas_f[k]
    inner = grid_max(J, th, S, inner_res, inner_box)
    step = (outer_box.upper - outer_box.lower) / max(outer_res - 1, 1)
    near = np.all(np.abs(thetas_f - th) <= step * (1 + 1e-9), axis=1)
    outer_err = float(np.max(np.abs(vals[near] - vals[k]))) if near.any() else 0.0
    return GridMinMax(th, float(vals[k]), inner.error + outer_err, thetas_f, vals,
                      int(sum(len(p.points) for p in pieces if p.grid_idx)))


def _names_in(M: SemialgebraicSet, names):
    missing = [nm for nm in names if nm not in M.bounds]
    if missing:
        raise ValueError(f"outer set has no bounds for {missing}; pass outer_box")
    return names


# ---------------------------------------------------------------------------
# rejection sampling


@dataclass
class Sample:
    points: np.ndarray
    acceptance_rate: float
    proposals: int


def rejection_sample(S: SemialgebraicSet, box: Box, count: int | None = None, seed: int = 0,
                     names: Sequence[str] | None = None, proposals: int | None = None,
                     batch: int = 20_000) -> Sample:
    """Uniform proposals on ``box`` (over ``names``) kept when they lie in ``S`` (or its projection).

    With ``proposals`` given exactly that many points are drawn; otherwise
    drawing stops once ``count`` points are accepted or the budget of
    ``1000 * count`` proposals is spent.
    """
    space = S.space
    names = list(names) if names is not None else list(space.names)
    if box.dim != len(names):
        raise ValueError("box dimension does not match the sampled variables")
    rng = np.random.Generator(np.random.Philox(key=seed))
    budget = proposals if proposals is not None else 1000 * max(count or 1, 1)
    kept = []
    drawn = 0
    n_kept = 0
    while drawn < budget and (proposals is not None or n_kept < (count or 1)):
        k = min(batch, budget - drawn)
        P = box.lower + (box.upper - box.lower) * rng.random((k, box.dim))
        m = feasible_mask(S, names, P)
        kept.append(P[m])
        n_kept += int(m.sum())
        drawn += k
    pts = np.vstack(kept) if kept else np.zeros((0, box.dim))
    if len(pts) == 0:
        raise EmptyGridError(f"no proposal accepted out of {drawn}")
    rate = len(pts) / drawn
    if count is not None:
        pts = pts[:count]
    return Sample(pts, rate, drawn)


def write_csv(path, header: Sequence[str], rows) -> None:
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(list(header))
        for r in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])
