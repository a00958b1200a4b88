"""Set-membership estimation problems and the two-stage min-max solver.

An :class:`EstimationProblem` holds

* ``J`` over (parameters, uncertain variables),
* ``S``, the uncertainty set over the same space (it must not involve the
  parameters for the estimators built here),
* ``M``, the set the estimate must lie in, over (parameters, lifting
  variables).  Lifting variables let ``M`` be the projection of a higher
  dimensional set, e.g. a feasible parameter set together with its noise
  samples.

Clique lists are kept by variable name and restricted to each stage's space.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .bounding_box import outer_box
from .lasserre_hierarchy import HierarchyResult, RunningBest, min_order, running_best, solve_hierarchy
from .moments import Box
from .oracle import projected_violation
from .poly_core import Polynomial, VariableSpace
from .sdp_solver import SolverSettings
from .sets import SemialgebraicSet
from .sos_relaxation import ValueFunctionApprox, approximate_value_function, default_tau
from .sparsity import SparsityPattern

log = logging.getLogger(__name__)

KINDS = ("general_minmax", "conditional_center", "robust_projection")
FEAS_TOL = 1e-6


@dataclass
class EstimationProblem:
    kind: str
    J: Polynomial
    M: SemialgebraicSet
    S: SemialgebraicSet
    cliques: list[list[str]] | None = None
    notes: str = ""
    box: Box | None = None
    copies: list[str] | None = None  # parameter copies in the uncertain block (conditional centers)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown problem kind {self.kind!r}")
        if self.S.space != self.J.space:
            raise ValueError("J and S must share a variable space")
        if tuple(self.M.space.theta_names) != tuple(self.J.space.theta_names):
            raise ValueError("M and J must declare the same parameter variables")
        if self.kind != "general_minmax" and _theta_coupled(self.S):
            raise ValueError(f"{self.kind}: the uncertainty set must not depend on the parameters")

    @property
    def theta_names(self) -> tuple[str, ...]:
        return self.J.space.theta_names

    def _pattern(self, space: VariableSpace) -> SparsityPattern | None:
        if not self.cliques:
            return None
        cl = []
        for c in self.cliques:
            sub = [nm for nm in c if nm in space.names]
            if sub and sub not in cl:
                cl.append(sub)
        return SparsityPattern.from_names(space, cl)

    def inner_pattern(self) -> SparsityPattern | None:
        return self._pattern(self.J.space)

    def outer_pattern(self) -> SparsityPattern | None:
        return self._pattern(self.M.space)


def _theta_coupled(S: SemialgebraicSet) -> bool:
    return S.depends_on_theta()


def theta_monomial_free(S: SemialgebraicSet) -> bool:
    """True when no constraint of ``S`` has a coefficient on a monomial involving a parameter."""
    ell = S.space.theta_count
    for p in S.inequalities + S.equalities:
        if any(any(e[:ell]) for e, _ in p.items()):
            return False
    return not any(nm in S.bounds for nm in S.space.theta_names)


def general_problem(J: Polynomial, S: SemialgebraicSet, M: SemialgebraicSet, cliques=None,
                    notes: str = "") -> EstimationProblem:
    return EstimationProblem("general_minmax", J, M, S, cliques, notes)


def build_conditional_center(D_nu: SemialgebraicSet, M: SemialgebraicSet, nu_names: Sequence[str] | None = None,
                             cliques=None, notes: str = "") -> EstimationProblem:
    """Squared-distance Chebyshev center of ``D_nu`` conditioned to ``M``.

    ``D_nu`` is described over the uncertain block only; its first ``l``
    variables (or ``nu_names``) are the copies of the parameters.
    """
    ell = M.space.theta_count
    nu = list(nu_names) if nu_names is not None else list(D_nu.space.names[:ell])
    if len(nu) != ell or ell == 0:
        raise ValueError(f"need {ell} parameter copies in the uncertain block, got {len(nu)}")
    if any(nm in M.space.theta_names for nm in D_nu.space.names):
        raise ValueError("uncertain block reuses a parameter name")
    space = VariableSpace.from_blocks(M.space.theta_names, D_nu.space.names)
    S = D_nu.embed(space)
    J = Polynomial.zero(space)
    for th, v in zip(M.space.theta_names, nu):
        d = Polynomial.variable(space, v) - Polynomial.variable(space, th)
        J = J + d * d
    return EstimationProblem("conditional_center", J, M, S, cliques, notes, copies=nu)


def build_robust_projection(residuals: Sequence[Polynomial], S_eps: SemialgebraicSet, M: SemialgebraicSet,
                            p: int = 2, cliques=None, notes: str = "") -> EstimationProblem:
    """Worst-case squared l2 regression loss; only ``p = 2`` gives a polynomial objective."""
    if p != 2:
        raise ValueError(f"p = {p} makes the loss non-polynomial; only the squared 2-norm is supported")
    if not residuals:
        raise ValueError("at least one residual is required")
    if not all(isinstance(e, Polynomial) for e in residuals):
        raise TypeError("residuals must be polynomials")
    J = Polynomial.zero(residuals[0].space)
    for e in residuals:
        J = J + e * e
    return EstimationProblem("robust_projection", J, M, S_eps, cliques, notes)


# ---------------------------------------------------------------------------
# synthetic data


@dataclass
class Dataset:
    inputs: np.ndarray
    outputs: np.ndarray
    N: int
    noise_bounds: dict
    seed: int
    theta_true: np.ndarray | None = None
    truth: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=float)
        self.outputs = np.asarray(self.outputs, dtype=float)
        if self.inputs.shape[0] != self.N or self.outputs.shape[0] != self.N:
            raise ValueError("sequence lengths must equal N")
        if any(v < 0 for v in self.noise_bounds.values()):
            raise ValueError("noise bounds must be nonnegative")


def _rng(seed: int) -> np.random.Generator:
    # Philox-4x64 counter-based generator keyed by the seed: bit-reproducible and documented
    return np.random.Generator(np.random.Philox(key=int(seed)))


def arx_names(N: int) -> tuple[list[str], list[str], list[str]]:
    return ["theta1", "theta2"], [f"d{t}" for t in range(2, N + 1)], [f"e{t}" for t in range(1, N + 1)]


@dataclass
class ArxInstance:
    data: Dataset
    D: SemialgebraicSet
    cliques: list[list[str]]

    def truth_point(self) -> np.ndarray:
        return np.array([self.data.truth[nm] for nm in self.D.space.names])


def simulate_quantized_arx(seed: int, N: int = 20, theta_true=(0.6, 0.6), d_bound: float = 0.1,
                           threshold: float = 1.0, u_bound: float = 2.5, w_bound: float = 5.0,
                           theta_box=(-2.0, 2.0), prior_box=None) -> ArxInstance:
    """ARX system with a binary output sensor and its feasible set.

    ``w(t) = th1 w(t-1) + th2 u(t) + d(t)`` with ``w(0) = 0``, observed as
    ``y(t) = [w(t) >= threshold]``.  With ``e(t) = y(t) - w(t)`` the data give,
    for ``t = 2..N``, the equalities
    ``y(t) = th1 (y(t-1) - e(t-1)) + th2 u(t) + d(t) + e(t)``, the sign
    information ``e(t) <= 1 - threshold`` (bit 1) or ``e(t) >= -threshold``
    (bit 0), and ``|d(t)| <= d_bound``.

    Bounds added for compactness: ``|w(t)| <= w_bound`` (as bounds on ``e``)
    and ``theta_box`` on each parameter; both must be loose enough not to cut
    the feasible set.  ``prior_box`` is an optional genuine prior on the
    parameters, absent by default.
    """
    if N < 2:
        raise ValueError("N must be at least 2")
    rng = _rng(seed)
    u = rng.uniform(-u_bound, u_bound, N)
    d = rng.uniform(-d_bound, d_bound, N)
    th1, th2 = (float(v) for v in theta_true)
    w = np.zeros(N)
    prev = 0.0
    for t in range(N):
        w[t] = th1 * prev + th2 * u[t] + d[t]
        prev = w[t]
    y = (w >= threshold).astype(float)
    eps = y - w

    theta, dn, en = arx_names(N)
    space = VariableSpace.from_blocks(theta, dn + en)
    T1, T2 = (Polynomial.variable(space, nm) for nm in theta)
    eqs, ineqs = [], []
    for t in range(2, N + 1):
        e_prev = Polynomial.variable(space, f"e{t - 1}")
        e_t = Polynomial.variable(space, f"e{t}")
        d_t = Polynomial.variable(space, f"d{t}")
        rhs = T1 * (y[t - 2] - e_prev) + T2 * u[t - 1] + d_t + e_t
        eqs.append(rhs - y[t - 1])
    for t in range(1, N + 1):
        e_t = Polynomial.variable(space, f"e{t}")
        ineqs.append((1.0 - threshold) - e_t if y[t - 1] else e_t + threshold)
    bounds = {nm: (float(theta_box[0]), float(theta_box[1])) for nm in theta}
    if prior_box is not None:
        for nm, (a, b) in zip(theta, prior_box):
            lo, hi = max(bounds[nm][0], a), min(bounds[nm][1], b)
            bounds[nm] = (lo, hi)
    bounds.update({nm: (-d_bound, d_bound) for nm in dn})
    bounds.update({f"e{t}": (y[t - 1] - w_bound, y[t - 1] + w_bound) for t in range(1, N + 1)})
    D = SemialgebraicSet(space, ineqs, eqs, bounds)

    cliques = [["theta1", "theta2", "nu1", "nu2", f"d{t}", f"e{t - 1}", f"e{t}"] for t in range(2, N + 1)]
    truth = {"theta1": th1, "theta2": th2}
    truth.update({f"d{t}": float(d[t - 1]) for t in range(2, N + 1)})
    truth.update({f"e{t}": float(eps[t - 1]) for t in range(1, N + 1)})
    data = Dataset(u, y, N, {"d": d_bound}, seed, np.array([th1, th2]), truth,
                   {"example": "arx-binary", "threshold": threshold, "w": w, "w_bound": w_bound})
    return ArxInstance(data, D, cliques)


def nu_copy(D: SemialgebraicSet, prefix: str = "nu") -> SemialgebraicSet:
    """``D`` re-expressed with its parameters renamed ``nu1, nu2, ...`` and moved to the uncertain block."""
    ell = D.space.theta_count
    mapping = {nm: f"{prefix}{k + 1}" for k, nm in enumerate(D.space.theta_names)}
    names = [mapping.get(nm, nm) for nm in D.space.names]
    space = VariableSpace.from_blocks([], names)
    return D.embed(space, mapping)


def arx_conditional_center(inst: ArxInstance) -> EstimationProblem:
    D_nu = nu_copy(inst.D)
    return build_conditional_center(D_nu, inst.D, cliques=inst.cliques,
                                     notes=f"quantized ARX, N={inst.data.N}, seed={inst.data.seed}")


# MISO static model: output = sum_i m_i(theta) x_i with the monomials below
MISO_TERMS = {1: ((1,), {1: 1}), 2: ((1, 2), {1: 1, 2: 1}), 3: ((3,), {3: 1}), 4: ((1,), {1: 2}),
              5: ((4, 5), {4: 1, 5: 1}), 6: ((5,), {5: 2}), 7: ((4, 6), {4: 1, 6: 1})}


def miso_terms_for(subset: Sequence[int]) -> list[int]:
    s = set(subset)
    return [k for k, (params, _) in MISO_TERMS.items() if set(params) <= s]


@dataclass
class MisoInstance:
    data: Dataset
    D: SemialgebraicSet
    S_xi: SemialgebraicSet
    residuals: list[Polynomial]
    cliques: list[list[str]]
    subset: list[int]
    terms: list[int]

    def truth_point(self) -> np.ndarray:
        return np.array([self.data.truth[nm] for nm in self.D.space.names])


def simulate_miso_static(seed: int, N: int = 10, theta_true=(1.0, 0.6, -0.5, 0.3, 0.8, -0.5),
                         dx_bound: float = 0.2, dy_bound: float = 0.25, subset: Sequence[int] | None = None,
                         terms: Sequence[int] | None = None, theta_box=(-2.0, 2.0)) -> MisoInstance:
    """Static MISO model polynomial in the parameters, with bounded input and output noise.

    Inputs ``x_i(t)`` are uniform on [-1, 1], ``u_i = x_i + xi_i`` and
    ``y = w + eta`` with uniform noise.  All seven channels are always drawn
    (row by row: x, then xi, then eta) so a seed gives the same data for
    every parameter subset.  Only the model terms whose parameters all lie in
    ``subset`` (or the explicit ``terms``) are kept, both for generating ``w``
    and in the model.
    """
    if N < 2:
        raise ValueError("N must be at least 2")
    subset = sorted(set(subset)) if subset is not None else [1, 2, 3, 4, 5, 6]
    if not subset or not set(subset) <= {1, 2, 3, 4, 5, 6}:
        raise ValueError(f"parameter subset must be a nonempty subset of 1..6, got {subset}")
    terms = sorted(set(terms)) if terms is not None else miso_terms_for(subset)
    for k in terms:
        if k not in MISO_TERMS or not set(MISO_TERMS[k][0]) <= set(subset):
            raise ValueError(f"term {k} needs parameters outside the subset {subset}")
    if not terms:
        raise ValueError("no model term uses only the selected parameters")
    theta_true = np.asarray(theta_true, dtype=float)
    rng = _rng(seed)
    x = rng.uniform(-1.0, 1.0, (N, 7))
    xi = rng.uniform(-dx_bound, dx_bound, (N, 7))
    eta = rng.uniform(-dy_bound, dy_bound, N)

    def coef(k, th):
        return float(np.prod([th[p - 1] ** e for p, e in MISO_TERMS[k][1].items()]))

    w = np.array([sum(coef(k, theta_true) * x[t, k - 1] for k in terms) for t in range(N)])
    u = x + xi
    y = w + eta

    theta = [f"theta{p}" for p in subset]
    xi_names = [[f"xi{k}_{t}" for k in terms] for t in range(1, N + 1)]
    eta_names = [f"eta{t}" for t in range(1, N + 1)]
    flat_xi = [nm for row in xi_names for nm in row]
    space_D = VariableSpace.from_blocks(theta, flat_xi + eta_names)
    space_J = VariableSpace.from_blocks(theta, flat_xi)

    def model(space, t):
        out = Polynomial.zero(space)
        for j, k in enumerate(terms):
            m = Polynomial.constant(space, 1.0)
            for p, e in MISO_TERMS[k][1].items():
                m = m * Polynomial.variable(space, f"theta{p}") ** e
            out = out + m * (u[t, k - 1] - Polynomial.variable(space, xi_names[t][j]))
        return out

    eqs = [model(space_D, t) + Polynomial.variable(space_D, eta_names[t]) - y[t] for t in range(N)]
    bounds = {nm: (float(theta_box[0]), float(theta_box[1])) for nm in theta}
    bounds.update({nm: (-dx_bound, dx_bound) for nm in flat_xi})
    bounds.update({nm: (-dy_bound, dy_bound) for nm in eta_names})
    D = SemialgebraicSet(space_D, (), eqs, bounds)
    S_xi = SemialgebraicSet(space_J, (), (), {nm: (-dx_bound, dx_bound) for nm in flat_xi})
    residuals = [y[t] - model(space_J, t) for t in range(N)]
    cliques = [theta + xi_names[t] + [eta_names[t]] for t in range(N)]

    truth = {f"theta{p}": float(theta_true[p - 1]) for p in subset}
    truth.update({xi_names[t][j]: float(xi[t, k - 1]) for t in range(N) for j, k in enumerate(terms)})
    truth.update({eta_names[t]: float(eta[t]) for t in range(N)})
    data = Dataset(u, y, N, {"xi": dx_bound, "eta": dy_bound}, seed, theta_true[[p - 1 for p in subset]], truth,
                   {"example": "miso-static", "x": x, "subset": subset, "terms": terms})
    return MisoInstance(data, D, S_xi, residuals, cliques, subset, terms)


def miso_robust_projection(inst: MisoInstance) -> EstimationProblem:
    return build_robust_projection(inst.residuals, inst.S_xi, inst.D, cliques=inst.cliques,
                                   notes=f"MISO static, N={inst.data.N}, subset={inst.subset}, terms={inst.terms}")


def miso_clique_indices(N: int) -> list[list[int]]:
    """1-based clique index sets for the full seven-term model with variables stacked as
    ``[theta(6), xi(1)(7), ..., xi(N)(7), eta(1..N)]``."""
    return [list(range(1, 7)) + list(range(6 + 7 * (t - 1) + 1, 6 + 7 * (t - 1) + 8)) + [6 + 7 * N + t]
            for t in range(1, N + 1)]


# ---------------------------------------------------------------------------
# two-stage solve


@dataclass
class TauResult:
    tau: int
    value_function: ValueFunctionApprox
    hierarchy: HierarchyResult
    estimate: np.ndarray
    lifted_point: np.ndarray
    outer_value: float
    timings: dict


@dataclass
class TwoStageResult:
    estimate: np.ndarray
    outer_value: float
    value_function: ValueFunctionApprox
    hierarchy: HierarchyResult
    feasibility_residuals: dict
    box: Box
    sweep: list[TauResult]
    best: RunningBest
    timings: dict
    warnings: list[str]
    oracle_comparison: dict | None = None

    @property
    def degraded(self) -> bool:
        return any(r.hierarchy.extraction_failed for r in self.sweep) or \
            self.feasibility_residuals.get("residual", 0.0) > FEAS_TOL


def feasibility_residuals(M: SemialgebraicSet, theta, lifted_point=None) -> dict:
    """Residual of ``theta`` against ``M``: at the given lifted point and (when lifts exist) minimized by LP."""
    ell = M.space.theta_count
    out = {}
    if M.space.n == ell:
        out["point"] = float(M.residuals(np.asarray(theta))[0])
        out["residual"] = out["point"]
        return out
    if lifted_point is not None:
        out["point"] = float(M.residuals(np.asarray(lifted_point))[0])
    try:
        lp, _ = projected_violation(M, dict(zip(M.space.theta_names, map(float, theta))))
        out["projected"] = lp
    except ValueError:
        pass
    out["residual"] = min(out.values()) if out else float("nan")
    return out


def solve_two_stage(problem: EstimationProblem, tau_list: Sequence[int] | None = None, t: int | None = None,
                    settings: SolverSettings | None = None, sparse: bool = True, box: Box | None = None,
                    box_order: int | None = None, extra_orders: int = 1) -> TwoStageResult:
    settings = settings or SolverSettings()
    taus = list(tau_list) if tau_list else [default_tau(problem.J)]
    warns: list[str] = []
    timings: dict = {}
    p_in = problem.inner_pattern() if sparse else None
    p_out = problem.outer_pattern() if sparse else None
    if problem.cliques and not sparse:
        warns.append("clique pattern ignored: dense relaxations requested")

    t0 = time.perf_counter()
    R = box or problem.box
    # one order above the minimum: the order-1 box is often the a-priori box again
    order = box_order or t or max(min_order(Polynomial.constant(problem.M.space, 0.0), problem.M), 1) + 1
    if R is None:
        R = outer_box(problem.M, order, pattern=p_out, settings=settings)
    timings["box"] = time.perf_counter() - t0

    S = problem.S
    if problem.copies:
        t1 = time.perf_counter()
        S = _tighten_copies(problem, order, settings, sparse)
        timings["copies_box"] = time.perf_counter() - t1

    sweep: list[TauResult] = []
    theta_space = problem.M.space.theta_space()
    for tau in taus:
        tt = {}
        t1 = time.perf_counter()
        vf = approximate_value_function(problem.J, S, R, tau, settings, p_in)
        tt["value_approx"] = time.perf_counter() - t1
        f = vf.polynomial.embed(problem.M.space) if vf.polynomial.space != problem.M.space else vf.polynomial
        t_lo = max(t or 0, min_order(f, problem.M))
        t2 = time.perf_counter()
        hier = solve_hierarchy(f, problem.M, t_lo, t_lo + extra_orders, settings, p_out)
        tt["polymin"] = time.perf_counter() - t2
        lifted = np.asarray(hier.point)
        est = lifted[: theta_space.n]
        value = float(vf.polynomial(est))
        warns.extend(f"tau {tau}: {w}" for w in hier.warnings)
        sweep.append(TauResult(tau, vf, hier, est, lifted, value, tt))
        log.info("tau %d: value %.6g at %s (%.1fs + %.1fs)", tau, value, est, tt["value_approx"], tt["polymin"])

    best = running_best([s.outer_value for s in sweep], [s.estimate for s in sweep], [s.tau for s in sweep])
    chosen = sweep[best.taus.index(best.best_tau[-1])]
    timings["value_approx"] = sum(s.timings["value_approx"] for s in sweep)
    timings["polymin"] = sum(s.timings["polymin"] for s in sweep)
    timings["total"] = time.perf_counter() - t0
    feas = feasibility_residuals(problem.M, chosen.estimate, chosen.lifted_point)
    return TwoStageResult(chosen.estimate, best.value, chosen.value_function, chosen.hierarchy, feas, R, sweep,
                          best, timings, warns)


def _tighten_copies(problem: EstimationProblem, order: int, settings, sparse: bool) -> SemialgebraicSet:
    """Replace the a-priori bounds of the parameter copies by an outer box of their own feasible set.

    The copies never leave that box on ``S``, so the stage-one identity stays
    valid while the relaxation gets a much tighter range to work with.
    """
    S = problem.S
    sub = VariableSpace.from_blocks([], S.space.alpha_names)
    S_sub = SemialgebraicSet(sub, [g.restrict(sub) for g in S.inequalities],
                             [h.restrict(sub) for h in S.equalities],
                             {nm: b for nm, b in S.bounds.items() if nm in sub.names}, S.entire)
    pattern = problem.inner_pattern()
    pattern = pattern.restricted(S.space, sub) if (pattern is not None and sparse) else None
    box = outer_box(S_sub, order, pattern=pattern, settings=settings, names=problem.copies)
    tight = {}
    for nm, lo, hi in zip(problem.copies, box.lower, box.upper):
        a, b = S.bounds.get(nm, (-np.inf, np.inf))
        tight[nm] = (max(a, float(lo)), min(b, float(hi)))
    return S.with_bounds(tight)


def unconditional_center(result: TwoStageResult, settings: SolverSettings | None = None, t: int | None = None):
    """Minimizer of the chosen value-function approximation over the box alone (``M`` ignored)."""
    vf = result.value_function
    K = SemialgebraicSet.from_box(vf.space, result.box)
    t = t or min_order(vf.polynomial, K)
    hier = solve_hierarchy(vf.polynomial, K, t, t + 1, settings)
    return np.asarray(hier.point), hier
