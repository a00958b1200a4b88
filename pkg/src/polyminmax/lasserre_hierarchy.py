"""Stage two: moment hierarchy for minimizing a polynomial over a semialgebraic set.

Each order ``t`` gives a lower bound ``inf Q_t``.  Finite convergence is
detected with a rank (flatness) test on the moment matrices; when it passes,
minimizers are read off the moments and polished with a local solver.
"""
from __future__ import annotations

import csv
import logging
import warnings as _warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.linalg as sla
from scipy.optimize import minimize

from ._putinar import DegreeError
from .poly_core import Polynomial, VariableSpace, add_exps, basis_on
from .presolve import Elimination, eliminate_affine_equalities
from .sdp_solver import SolverFailure, SolverSettings, solve
from .sets import SemialgebraicSet
from .sparsity import MomentRelaxation, SparsityPattern, build_sparse_moment_relaxation

log = logging.getLogger(__name__)

RANK_REL_TOL = 1e-6
RANK_GAP = 100.0
FEAS_TOL = 1e-6
EXTRACTION_SEED = 20240607


def build_moment_relaxation(f: Polynomial, K: SemialgebraicSet, t: int) -> MomentRelaxation:
    return build_sparse_moment_relaxation(f, K, t, None)


def min_order(f: Polynomial, K: SemialgebraicSet) -> int:
    degs = [f.degree()] + [p.degree() for p in K.inequalities + K.equalities]
    if K.bounds:
        degs.append(2)
    return max(1, max((d + 1) // 2 for d in degs))


def numerical_rank(M: np.ndarray) -> tuple[int, bool]:
    """Rank with relative threshold ``RANK_REL_TOL``; the flag says the spectrum has a clear gap there."""
    sv = np.linalg.svd(M, compute_uv=False)
    if sv.size == 0 or sv[0] <= 0:
        return 0, True
    r = int(np.sum(sv > RANK_REL_TOL * sv[0]))
    if r == len(sv):
        return r, True
    return r, bool(sv[r - 1] > RANK_GAP * max(sv[r], np.finfo(float).tiny))


def _moment_matrix(z: dict, basis: list) -> np.ndarray:
    n = len(basis)
    M = np.empty((n, n))
    for a in range(n):
        for b in range(a, n):
            M[a, b] = M[b, a] = z[add_exps(basis[a], basis[b])]
    return M


@dataclass
class OrderRecord:
    t: int
    status: str
    bound: float | None
    ranks: list[tuple[int, int]] = field(default_factory=list)
    flat: bool = False
    marginal_flat: bool = False
    residuals: dict = field(default_factory=dict)
    iterations: int = 0
    seconds: float = 0.0
    rows: int = 0


@dataclass
class HierarchyResult:
    space: VariableSpace
    records: list[OrderRecord]
    flat_at: int | None
    minimizers: list[np.ndarray] | None
    first_order_point: np.ndarray | None
    point: np.ndarray | None
    point_source: str
    point_residual: float
    extraction_failed: bool
    warnings: list[str]

    @property
    def orders(self) -> list[int]:
        return [r.t for r in self.records]

    @property
    def lower_bounds(self) -> list[float | None]:
        return [r.bound for r in self.records]

    @property
    def certificates(self) -> list[dict]:
        return [dict(r.residuals, status=r.status) for r in self.records]

    @property
    def bound(self) -> float:
        vals = [b for b in self.lower_bounds if b is not None]
        return max(vals) if vals else float("nan")


def _polish(f: Polynomial, K: SemialgebraicSet, x0: np.ndarray) -> np.ndarray:
    """Local refinement (SLSQP) of a candidate minimizer; returns ``x0`` if nothing better is found."""
    space = f.space
    n = space.n
    grad_f = [f.derivative(i) for i in range(n)]
    lo = np.full(n, -np.inf)
    hi = np.full(n, np.inf)
    for nm, (a, b) in K.bounds.items():
        i = space.index(nm)
        lo[i], hi[i] = a, b
    cons = []
    for g in K.inequalities:
        dg = [g.derivative(i) for i in range(n)]
        cons.append({"type": "ineq", "fun": g, "jac": lambda x, dg=dg: np.array([d(x) for d in dg])})
    for h in K.equalities:
        dh = [h.derivative(i) for i in range(n)]
        cons.append({"type": "eq", "fun": h, "jac": lambda x, dh=dh: np.array([d(x) for d in dh])})
    start = np.clip(x0, lo, hi)
    bounds = list(zip(np.where(np.isfinite(lo), lo, None), np.where(np.isfinite(hi), hi, None)))
    with _warnings.catch_warnings():
        _warnings.simplefilter("ignore")
        try:
            res = minimize(f, start, jac=lambda x: np.array([d(x) for d in grad_f]), method="SLSQP",
                           bounds=bounds, constraints=cons, options={"maxiter": 200, "ftol": 1e-14})
            cand = np.clip(res.x, lo, hi)
        except (ValueError, np.linalg.LinAlgError):
            return x0
    r0 = float(K.residuals(x0)[0])
    r1 = float(K.residuals(cand)[0])
    f0, f1 = f(x0), f(cand)
    slack = 1e-7 * (1.0 + abs(f0))
    if r1 <= max(r0, 1e-10) and f1 <= f0 + slack:
        return cand
    if r1 < r0 and r1 <= FEAS_TOL and f1 <= f0 + 1e-4 * (1.0 + abs(f0)):
        return cand
    return x0


def _extract_atoms(z: dict, clique: Sequence[int], n: int, t: int, r: int) -> list[np.ndarray] | None:
    """Atoms of a flat moment sequence on one clique (column-echelon / multiplication-matrix method)."""
    basis = basis_on(n, clique, t)
    M = _moment_matrix(z, basis)
    w, U = np.linalg.eigh(M)
    order = np.argsort(w)[::-1][:r]
    if np.any(w[order] <= 0):
        return None
    V = U[:, order] * np.sqrt(w[order])
    # greedy pivot rows in graded order: the first r independent rows of V
    tol = 1e-3 * float(np.max(np.linalg.norm(V, axis=1)))
    Q = np.zeros((0, r))
    pivots = []
    for k in range(len(basis)):
        v = V[k] - Q.T @ (Q @ V[k]) if len(pivots) else V[k].copy()
        nv = float(np.linalg.norm(v))
        if nv > tol:
            pivots.append(k)
            Q = np.vstack([Q, v / nv])
            if len(pivots) == r:
                break
    if len(pivots) < r:
        return None
    Uech = V @ np.linalg.inv(V[pivots])
    index = {e: k for k, e in enumerate(basis)}
    cl = sorted(clique)
    Ns = []
    for i in cl:
        unit = tuple(int(j == i) for j in range(n))
        rows = []
        for p in pivots:
            k = index.get(add_exps(basis[p], unit))
            if k is None:
                return None
            rows.append(Uech[k])
        Ns.append(np.array(rows))
    rng = np.random.Generator(np.random.Philox(key=EXTRACTION_SEED))
    c = rng.uniform(0.1, 1.0, size=len(cl))
    c /= c.sum()
    N = sum(ci * Ni for ci, Ni in zip(c, Ns))
    T, Z = sla.schur(N, output="real")
    sub = np.abs(np.diag(T, -1))
    if sub.size and np.any(sub > 1e-6 * max(1.0, float(np.abs(T).max()))):
        return None
    atoms = []
    for j in range(r):
        q = Z[:, j]
        x = np.zeros(n)
        for i, Ni in zip(cl, Ns):
            x[i] = q @ Ni @ q
        atoms.append(x)
    return atoms


def solve_hierarchy(f: Polynomial, K: SemialgebraicSet, t_min: int | None = None, t_max: int | None = None,
                    settings: SolverSettings | None = None, pattern: SparsityPattern | None = None,
                    rescale: bool = True, extract: bool = True, presolve: bool = True) -> HierarchyResult:
    settings = settings or SolverSettings()
    space = f.space
    if K.space != space:
        raise ValueError("f and K must share a variable space")
    if presolve and K.equalities:
        elim, Kr = eliminate_affine_equalities(K, objective=f)
        if not elim.trivial:
            res = solve_hierarchy(elim.reduce(f), Kr, t_min, t_max, settings, elim.pattern(pattern), rescale,
                                  extract, presolve=False)
            return _lift_result(res, elim, K)
    need = min_order(f, K)
    t_min = need if t_min is None else int(t_min)
    t_max = t_min if t_max is None else int(t_max)
    if t_min < need:
        raise DegreeError(f"order {t_min} is below the degree requirement {need}")
    if t_max < t_min:
        raise ValueError("t_max must be >= t_min")

    n = space.n
    shift = np.zeros(n)
    scale = np.ones(n)
    if rescale:
        for nm, (lo, hi) in K.bounds.items():
            i = space.index(nm)
            if hi > lo:
                shift[i] = 0.5 * (lo + hi)
                scale[i] = 0.5 * (hi - lo)
    fs = f.substitute_affine(shift, scale)
    Ks = K.rescaled(shift, scale)

    def to_orig(s):
        return shift + scale * np.asarray(s)

    records: list[OrderRecord] = []
    warns: list[str] = []
    flat_at = None
    last = None
    atoms = None
    extraction_failed = False
    for t in range(t_min, t_max + 1):
        rel = build_sparse_moment_relaxation(fs, Ks, t, pattern)
        sol = solve(rel.problem, settings=settings)
        rec = OrderRecord(t, sol.status, None, residuals=dict(sol.residuals), iterations=sol.iterations,
                          seconds=sol.seconds, rows=rel.problem.m)
        records.append(rec)
        if not sol.usable:
            warns.append(f"order {t}: solver status {sol.status}")
            continue
        if not sol.optimal:
            warns.append(f"order {t}: solver stalled, best iterate accurate to {max(sol.residuals.values()):.1e}")
        rec.bound = float(-sol.dual_objective * rel.f_scale)
        z = {e: -float(v) for e, v in zip(rel.assembly.rows, sol.dual_multipliers)}
        last = (rel, z)
        if not extract:
            continue
        flat = True
        ranks = []
        for c, cl in enumerate(rel.cliques):
            low = t - rel.clique_r[c]
            rk_hi, ok_hi = numerical_rank(_moment_matrix(z, basis_on(n, cl, t)))
            rk_lo, ok_lo = numerical_rank(_moment_matrix(z, basis_on(n, cl, low))) if low >= 0 else (-1, False)
            ranks.append((rk_hi, rk_lo))
            flat = flat and ok_hi and ok_lo and rk_hi == rk_lo
        rec.ranks = ranks
        ell = space.theta_count
        if 0 < ell < n and all(set(range(ell)) <= cl for cl in rel.cliques):
            low = t - max(rel.clique_r)
            th = list(range(ell))
            m_hi = numerical_rank(_moment_matrix(z, basis_on(n, th, t)))
            m_lo = numerical_rank(_moment_matrix(z, basis_on(n, th, low))) if low >= 0 else (-1, False)
            rec.marginal_flat = bool(m_hi[1] and m_lo[1] and m_hi[0] == m_lo[0] == 1)
        rec.flat = flat
        if flat:
            flat_at = t
            break
        if rec.marginal_flat:
            break

    ok = [r for r in records if r.bound is not None]
    if not ok:
        raise SolverFailure("no relaxation order solved", records[-1].status if records else "none", "polymin")
    for a, b in zip(ok, ok[1:]):
        if b.bound < a.bound - 1e-6 * (1.0 + abs(a.bound)):
            warns.append(f"bound decreased from order {a.t} to {b.t}")

    rel, z = last
    unit = [tuple(int(j == i) for j in range(n)) for i in range(n)]
    first = np.array([z[e] for e in unit])
    first_order_point = to_orig(first)

    minimizers = None
    if not extract:
        return HierarchyResult(space, records, None, None, first_order_point, None, "none", float("nan"), False,
                               warns)
    if flat_at is not None:
        ranks = records[-1].ranks
        if all(rk == 1 for rk, _ in ranks):
            atoms = [first]
        elif len(rel.cliques) == 1:
            atoms = _extract_atoms(z, rel.cliques[0], n, flat_at, ranks[0][0])
        else:
            atoms = None
            warns.append("rank > 1 on a multi-clique pattern: using first-order moments")
        if atoms is None:
            extraction_failed = True
            warns.append("extraction_failed: flat moments but atoms could not be recovered")
        else:
            polished = [_polish(fs, Ks, a) for a in atoms]
            good = [p for p in polished if Ks.residuals(p)[0] <= FEAS_TOL]
            if len(good) < len(polished):
                warns.append(f"{len(polished) - len(good)} extracted atom(s) violate the constraints")
            if good:
                minimizers = [to_orig(p) for p in good]
            else:
                extraction_failed = True
                warns.append("extraction_failed: no extracted atom is feasible")
    else:
        warns.append("rank test not passed: point taken from first-order moments "
                     f"(rank tolerance {RANK_REL_TOL:g}, gap ratio {RANK_GAP:g})")

    if minimizers:
        vals = [f(m) for m in minimizers]
        point = minimizers[int(np.argmin(vals))]
        source = "atoms"
    else:
        source = "marginal" if records[-1].marginal_flat else "first_order"
        point = to_orig(_polish(fs, Ks, first))
    point_residual = float(K.residuals(point)[0])
    if point_residual > FEAS_TOL:
        warns.append(f"estimate violates the constraints by {point_residual:.2e}")
    return HierarchyResult(space, records, flat_at, minimizers, first_order_point, point, source,
                           point_residual, extraction_failed, warns)


def _lift_result(res: HierarchyResult, elim: Elimination, K: SemialgebraicSet) -> HierarchyResult:
    lift = (lambda p: None if p is None else elim.lift(p))
    mins = None if res.minimizers is None else [elim.lift(m) for m in res.minimizers]
    point = lift(res.point)
    resid = float(K.residuals(point)[0]) if point is not None else res.point_residual
    return HierarchyResult(elim.source, res.records, res.flat_at, mins, lift(res.first_order_point), point,
                           res.point_source, resid, res.extraction_failed, res.warnings)


@dataclass
class RunningBest:
    taus: list[int]
    values: list[float]
    best: list[float]
    best_tau: list[int]
    points: list

    @property
    def value(self) -> float:
        return self.best[-1]

    @property
    def point(self):
        return self.points[self.taus.index(self.best_tau[-1])]


def running_best(values: Sequence[float], points: Sequence | None = None,
                 taus: Sequence[int] | None = None) -> RunningBest:
    """Running minimum of outer optimal values over a tau sweep and where it was attained."""
    values = [float(v) for v in values]
    if not values:
        raise ValueError("empty sweep")
    taus = list(taus) if taus is not None else list(range(1, len(values) + 1))
    points = list(points) if points is not None else [None] * len(values)
    if len(taus) != len(values) or len(points) != len(values):
        raise ValueError("values, points and taus must have equal length")
    best, arg = [], []
    for k, v in enumerate(values):
        if not best or v < best[-1]:
            best.append(v)
            arg.append(taus[k])
        else:
            best.append(best[-1])
            arg.append(arg[-1])
    return RunningBest(taus, values, best, arg, points)


def write_bounds_csv(path, rows: Sequence[dict]):
    """Per-order bound table; ``rows`` are dicts sharing keys (e.g. from :func:`bounds_rows`)."""
    rows = list(rows)
    keys = list(rows[0].keys()) if rows else ["tau", "t", "status", "bound", "flat"]
    with open(Path(path), "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=keys)
        w.writeheader()
        for r in rows:
            w.writerow(r)


def bounds_rows(result: HierarchyResult, tau: int | None = None) -> list[dict]:
    out = []
    for r in result.records:
        out.append({"tau": "" if tau is None else tau, "t": r.t, "status": r.status,
                    "bound": "" if r.bound is None else repr(r.bound),
                    "rank": ";".join(f"{a}/{b}" for a, b in r.ranks), "flat": int(r.flat),
                    "rows": r.rows, "iterations": r.iterations})
    return out
