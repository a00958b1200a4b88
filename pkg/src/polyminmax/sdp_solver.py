"""Primal-dual interior-point solver for block-diagonal SDPs with free variables.

Problem form (primal / dual)::

    minimize    sum_j <C_j, X_j> + c_f . x_f
    subject to  sum_j <A_ij, X_j> + (A_f x_f)_i = b_i      i = 1..m
                X_j PSD,  x_f free

    maximize    b . y
    subject to  C_j - sum_i y_i A_ij = S_j PSD,   A_f^T y = c_f

Each ``A_blocks[j]`` is an ``m x n_j**2`` sparse matrix whose row ``i`` is the
row-major vectorization of the symmetric matrix ``A_ij``.

The search direction is Nesterov-Todd with Mehrotra's predictor-corrector.
Free variables stay in the Newton system (an augmented Schur system) rather
than being split into differences of nonnegative variables.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

log = logging.getLogger(__name__)

OPTIMAL = "optimal"
NEAR_OPTIMAL = "near_optimal"
MAX_ITERATIONS = "max_iterations"
PRESUMED_INFEASIBLE = "presumed_infeasible"
PRESUMED_UNBOUNDED = "presumed_unbounded"
NUMERICAL_FAILURE = "numerical_failure"

ACCEPT_TOL = 1e-6
NEAR_TOL = 1e-4
STEP_FRACTION = 0.9
SCHUR_REG = 1e-12
OPERATOR_REFINE = 2
DIVERGENCE = 1e10


@dataclass(frozen=True)
class SolverSettings:
    tol: float = 1e-8
    max_iter: int = 100
    verbose: bool = False


class SolverFailure(RuntimeError):
    """An SDP did not reach ``optimal``; ``stage`` says which pipeline step it belonged to."""

    def __init__(self, message: str, status: str, stage: str = "", solution=None):
        super().__init__(f"{stage + ': ' if stage else ''}{message} (status {status})")
        self.status = status
        self.stage = stage
        self.solution = solution


@dataclass
class SdpProblem:
    block_sizes: list[int]
    n_free: int
    A_blocks: list[sp.csr_matrix]
    A_free: sp.csr_matrix
    b: np.ndarray
    C_blocks: list[np.ndarray]
    c_free: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.b = np.asarray(self.b, dtype=float)
        self.c_free = np.asarray(self.c_free, dtype=float).reshape(-1)
        m = len(self.b)
        if any(n < 1 for n in self.block_sizes):
            raise ValueError("PSD block sizes must be >= 1")
        if len(self.A_blocks) != len(self.block_sizes) or len(self.C_blocks) != len(self.block_sizes):
            raise ValueError("one constraint matrix and one cost matrix per block required")
        for n, A, C in zip(self.block_sizes, self.A_blocks, self.C_blocks):
            if A.shape != (m, n * n):
                raise ValueError(f"block constraint matrix has shape {A.shape}, expected {(m, n * n)}")
            if np.shape(C) != (n, n):
                raise ValueError("cost matrix shape does not match its block")
        if self.A_free.shape != (m, self.n_free) or self.c_free.shape != (self.n_free,):
            raise ValueError("free-variable data has the wrong shape")
        if not self.block_sizes and self.n_free == 0:
            raise ValueError("problem has no variables")

    @property
    def m(self) -> int:
        return len(self.b)

    def fingerprint(self) -> tuple:
        """Hashable summary used to compare assembled problems exactly."""
        parts = [tuple(self.block_sizes), self.n_free, self.b.tobytes(), self.c_free.tobytes()]
        for A, C in zip(self.A_blocks, self.C_blocks):
            A = A.tocoo()
            order = np.lexsort((A.col, A.row))
            parts += [A.row[order].tobytes(), A.col[order].tobytes(), A.data[order].tobytes(),
                      np.asarray(C).tobytes()]
        F = self.A_free.tocoo()
        order = np.lexsort((F.col, F.row))
        parts += [F.row[order].tobytes(), F.col[order].tobytes(), F.data[order].tobytes()]
        return tuple(parts)


@dataclass
class SdpSolution:
    status: str
    primal_blocks: list[np.ndarray]
    free_values: np.ndarray
    dual_multipliers: np.ndarray
    dual_slacks: list[np.ndarray]
    primal_objective: float
    dual_objective: float
    residuals: dict
    iterations: int
    seconds: float = 0.0

    @property
    def optimal(self) -> bool:
        return self.status == OPTIMAL

    @property
    def usable(self) -> bool:
        """Optimal, or the best iterate is accurate to ``NEAR_TOL`` after the method stalled."""
        return self.status in (OPTIMAL, NEAR_OPTIMAL)


class SdpAssembler:
    """Accumulates triplets and produces an :class:`SdpProblem`."""

    def __init__(self):
        self.block_sizes: list[int] = []
        self.n_free = 0
        self.rhs: dict[int, float] = {}
        self.m = 0
        self._blk: list[list[tuple[np.ndarray, np.ndarray, np.ndarray]]] = []
        self._cost_blk: dict[int, np.ndarray] = {}
        self._free: list[tuple[np.ndarray, np.ndarray, np.ndarray]] = []
        self._cost_free: dict[int, float] = {}

    def add_block(self, n: int) -> int:
        self.block_sizes.append(int(n))
        self._blk.append([])
        return len(self.block_sizes) - 1

    def add_free(self, count: int = 1) -> int:
        first = self.n_free
        self.n_free += count
        return first

    def set_rows(self, m: int):
        self.m = m

    def block_entries(self, block: int, rows, ii, jj, vals):
        """Add ``vals`` to A_{row}[ii, jj]; callers pass both triangles for symmetry."""
        self._blk[block].append((np.asarray(rows, dtype=np.int64), np.asarray(ii, dtype=np.int64) * self.block_sizes[block] + np.asarray(jj, dtype=np.int64), np.asarray(vals, dtype=float)))

    def free_entries(self, rows, cols, vals):
        self._free.append((np.asarray(rows, dtype=np.int64), np.asarray(cols, dtype=np.int64), np.asarray(vals, dtype=float)))

    def set_rhs(self, row: int, value: float):
        self.rhs[row] = self.rhs.get(row, 0.0) + value

    def cost_free(self, col: int, value: float):
        self._cost_free[col] = self._cost_free.get(col, 0.0) + value

    def cost_block(self, block: int, C: np.ndarray):
        self._cost_blk[block] = np.asarray(C, dtype=float)

    def build(self, meta: dict | None = None) -> SdpProblem:
        m = self.m
        A_blocks = []
        for j, n in enumerate(self.block_sizes):
            if self._blk[j]:
                r = np.concatenate([t[0] for t in self._blk[j]])
                c = np.concatenate([t[1] for t in self._blk[j]])
                v = np.concatenate([t[2] for t in self._blk[j]])
            else:
                r = c = np.zeros(0, dtype=np.int64)
                v = np.zeros(0)
            A = sp.csr_matrix((v, (r, c)), shape=(m, n * n))
            A.sum_duplicates()
            A.eliminate_zeros()
            A_blocks.append(A)
        if self._free:
            r = np.concatenate([t[0] for t in self._free])
            c = np.concatenate([t[1] for t in self._free])
            v = np.concatenate([t[2] for t in self._free])
        else:
            r = c = np.zeros(0, dtype=np.int64)
            v = np.zeros(0)
        A_free = sp.csr_matrix((v, (r, c)), shape=(m, self.n_free))
        A_free.sum_duplicates()
        A_free.eliminate_zeros()
        b = np.zeros(m)
        for i, val in self.rhs.items():
            b[i] = val
        C_blocks = [self._cost_blk.get(j, np.zeros((n, n))) for j, n in enumerate(self.block_sizes)]
        c_free = np.zeros(self.n_free)
        for k, val in self._cost_free.items():
            c_free[k] = val
        return SdpProblem(list(self.block_sizes), self.n_free, A_blocks, A_free, b, C_blocks, c_free, meta or {})


# ---------------------------------------------------------------------------
# interior-point method


class _Block:
    """Per-block cached data: local rows and the local sparse constraint matrix."""

    def __init__(self, A: sp.csr_matrix, n: int):
        self.n = n
        nz_rows = np.flatnonzero(np.diff(A.indptr))
        self.rows = nz_rows
        self.A = A
        self.A_loc = A[nz_rows]
        self.AT = A.T.tocsr()
        self.use_kron = n <= 40

    def apply(self, X: np.ndarray) -> np.ndarray:
        return self.A @ X.reshape(-1)

    def adjoint(self, y: np.ndarray) -> np.ndarray:
        M = (self.AT @ y).reshape(self.n, self.n)
        return 0.5 * (M + M.T)

    def schur(self, W: np.ndarray) -> np.ndarray:
        n = self.n
        if self.use_kron:
            T = self.A_loc @ np.kron(W, W)
        else:
            A3 = self.A_loc.toarray().reshape(-1, n, n)
            T = (W @ A3 @ W).reshape(len(self.rows), n * n)
        return np.asarray((self.A_loc @ T.T))


def _sym(M):
    return 0.5 * (M + M.T)


def _max_step(L: np.ndarray, D: np.ndarray) -> float:
    """Largest a with L L^T + a D PSD (inf when D is PSD)."""
    Linv_D = sla.solve_triangular(L, D, lower=True)
    M = sla.solve_triangular(L, Linv_D.T, lower=True)
    lam = np.linalg.eigvalsh(_sym(M))[0]
    return np.inf if lam >= 0 else -1.0 / lam


def _chol(M: np.ndarray) -> np.ndarray | None:
    try:
        return np.linalg.cholesky(M)
    except np.linalg.LinAlgError:
        return None


class _SchurSolver:
    """Factorizes [[H, F], [F^T, 0]] via Cholesky of H and of F^T H^-1 F."""

    def __init__(self, H: np.ndarray, F: np.ndarray):
        self.H = H
        m = H.shape[0]
        scale = max(1.0, float(np.max(np.abs(np.diag(H))))) if m else 1.0
        reg = SCHUR_REG * scale
        self.cho = None
        for _ in range(6):
            try:
                self.cho = sla.cho_factor(H + reg * np.eye(m), lower=True, check_finite=False)
                break
            except np.linalg.LinAlgError:
                reg *= 100.0
        if self.cho is None:
            raise np.linalg.LinAlgError("Schur complement is not positive definite")
        self.F = F
        self.kchol = None
        self.kpinv = None
        if F.shape[1]:
            self.HiF = sla.cho_solve(self.cho, F, check_finite=False)
            K = _sym(F.T @ self.HiF)
            kscale = max(1.0, float(np.max(np.abs(np.diag(K)))))
            kreg = SCHUR_REG * kscale
            for _ in range(4):
                try:
                    self.kchol = sla.cho_factor(K + kreg * np.eye(K.shape[0]), lower=True, check_finite=False)
                    break
                except np.linalg.LinAlgError:
                    kreg *= 100.0
            if self.kchol is None:
                self.kpinv = np.linalg.pinv(K, rcond=1e-13)

    def solve(self, r1: np.ndarray, r2: np.ndarray, refine: int = 3) -> tuple[np.ndarray, np.ndarray]:
        dy, dxf = self._solve(r1, r2)
        norm = float(np.linalg.norm(r1)) + float(np.linalg.norm(r2)) + 1e-300
        for _ in range(refine):
            e1 = r1 - self.H @ dy - self.F @ dxf
            e2 = r2 - self.F.T @ dy
            if float(np.linalg.norm(e1)) + float(np.linalg.norm(e2)) <= 1e-15 * norm:
                break
            cy, cf = self._solve(e1, e2)
            dy = dy + cy
            dxf = dxf + cf
        return dy, dxf

    def _solve(self, r1: np.ndarray, r2: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        Hr = sla.cho_solve(self.cho, r1, check_finite=False)
        if self.F.shape[1] == 0:
            return Hr, np.zeros(0)
        rhs = self.F.T @ Hr - r2
        dxf = sla.cho_solve(self.kchol, rhs, check_finite=False) if self.kchol is not None else self.kpinv @ rhs
        dy = Hr - self.HiF @ dxf
        return dy, dxf


def solve(problem: SdpProblem, tol: float = 1e-8, max_iter: int = 100, verbose: bool = False,
          settings: SolverSettings | None = None) -> SdpSolution:
    """Solve ``problem``; see the module docstring for the problem form."""
    if settings is not None:
        tol, max_iter, verbose = settings.tol, settings.max_iter, settings.verbose
    t0 = time.perf_counter()
    P = problem
    m = P.m
    blocks = [_Block(A, n) for A, n in zip(P.A_blocks, P.block_sizes)]
    Af = P.A_free.toarray() if P.n_free else np.zeros((m, 0))
    Cs = [_sym(np.asarray(C, dtype=float)) for C in P.C_blocks]
    cf = P.c_free
    b = P.b
    nn = sum(P.block_sizes)

    normb = float(np.linalg.norm(b))
    normC = float(np.sqrt(sum(np.sum(C * C) for C in Cs) + cf @ cf))
    normA = max([1.0] + [float(sp.linalg.norm(B.A)) for B in blocks])
    xi = max(10.0, np.sqrt(nn), nn * max(1.0, normb) / normA) if nn else 1.0
    eta = max(10.0, np.sqrt(nn), normC) if nn else 1.0
    X = [xi * np.eye(n) for n in P.block_sizes]
    S = [eta * np.eye(n) for n in P.block_sizes]
    y = np.zeros(m)
    xf = np.zeros(P.n_free)

    def A_of(Ms, xfv):
        out = Af @ xfv if P.n_free else np.zeros(m)
        for B, M in zip(blocks, Ms):
            out = out + B.apply(M)
        return out

    status = MAX_ITERATIONS
    history = []
    small_steps = 0
    it = 0
    best = None
    res = {}
    for it in range(max_iter + 1):
        rp = b - A_of(X, xf)
        Rd = [C - B.adjoint(y) - Sj for C, B, Sj in zip(Cs, blocks, S)]
        rf = cf - Af.T @ y
        pobj = float(sum(np.sum(C * Xj) for C, Xj in zip(Cs, X)) + cf @ xf)
        dobj = float(b @ y)
        gap = float(sum(np.sum(Xj * Sj) for Xj, Sj in zip(X, S)))
        mu = gap / nn if nn else 0.0
        pinf = float(np.linalg.norm(rp)) / (1.0 + normb)
        dinf = float(np.sqrt(sum(np.sum(R * R) for R in Rd) + rf @ rf)) / (1.0 + normC)
        relgap = abs(pobj - dobj) / (1.0 + abs(pobj) + abs(dobj))
        res = {"primal_feas": pinf, "dual_feas": dinf, "relative_gap": relgap, "mu": mu}
        history.append((pobj, dobj, pinf, dinf, relgap))
        score = max(pinf, dinf, relgap)
        if best is None or score < best[0]:
            best = (score, X, xf, y, S, dict(res), it)
        if verbose:
            log.info("it %3d pobj %+.9e dobj %+.9e pinf %.1e dinf %.1e gap %.1e", it, pobj, dobj, pinf, dinf, relgap)
        if max(pinf, dinf, relgap) <= tol:
            status = OPTIMAL
            break
        xnorm = max([float(np.abs(xf).max(initial=0.0))] + [float(np.abs(Xj).max()) for Xj in X])
        ynorm = max([float(np.abs(y).max(initial=0.0))] + [float(np.abs(Sj).max()) for Sj in S])
        if ynorm > DIVERGENCE * (1.0 + normC + normb) and dobj > 0 and pinf > ACCEPT_TOL:
            status = PRESUMED_INFEASIBLE
            break
        if xnorm > DIVERGENCE * (1.0 + normC + normb) and pobj < 0 and dinf > ACCEPT_TOL:
            status = PRESUMED_UNBOUNDED
            break
        if it == max_iter:
            break

        try:
            Ls, Gs, Ws, Ginv, lams = [], [], [], [], []
            for Xj, Sj in zip(X, S):
                L = _chol(Xj)
                R = _chol(Sj)
                if L is None or R is None:
                    raise np.linalg.LinAlgError("iterate left the cone")
                U, sv, Vt = np.linalg.svd(R.T @ L)
                V = Vt.T
                G = L @ V / np.sqrt(sv)
                Gi = (np.sqrt(sv)[:, None] * Vt) @ sla.solve_triangular(L, np.eye(L.shape[0]), lower=True)
                Ls.append((L, R))
                Gs.append(G)
                Ginv.append(Gi)
                Ws.append(_sym(G @ G.T))
                lams.append(sv)
            H = np.zeros((m, m))
            for B, W in zip(blocks, Ws):
                if len(B.rows):
                    H[np.ix_(B.rows, B.rows)] += B.schur(W)
            H = _sym(H)
            solver = _SchurSolver(H, Af)
        except (np.linalg.LinAlgError, ValueError) as exc:
            log.debug("factorization failure: %s", exc)
            status = NUMERICAL_FAILURE
            break

        WRdW = [W @ R @ W for W, R in zip(Ws, Rd)]

        def direction(Rc):
            r1 = rp - A_of([Rcj - WR for Rcj, WR in zip(Rc, WRdW)], np.zeros(P.n_free))
            dy, dxf = solver.solve(r1, rf)
            # refine against the operators themselves: H is formed with ill-conditioned scalings
            for k in range(OPERATOR_REFINE + 1):
                dS = [R - B.adjoint(dy) for R, B in zip(Rd, blocks)]
                dX = [_sym(Rcj - W @ dSj @ W) for Rcj, W, dSj in zip(Rc, Ws, dS)]
                if k == OPERATOR_REFINE:
                    break
                e1 = rp - A_of(dX, dxf)
                e2 = rf - Af.T @ dy
                if np.linalg.norm(e1) + np.linalg.norm(e2) <= 1e-14 * (1.0 + normb):
                    break
                cy, cf = solver.solve(e1, e2)
                dy = dy + cy
                dxf = dxf + cf
            return dX, dxf, dy, dS

        def steps(dX, dS):
            ap = min([1.0] + [STEP_FRACTION * _max_step(L, D) for (L, _), D in zip(Ls, dX)])
            ad = min([1.0] + [STEP_FRACTION * _max_step(R, D) for (_, R), D in zip(Ls, dS)])
            return ap, ad

        # predictor
        dX, dxf, dy, dS = direction([-Xj for Xj in X])
        ap, ad = steps(dX, dS)
        if nn:
            gap_aff = sum(np.sum((Xj + ap * a) * (Sj + ad * c)) for Xj, Sj, a, c in zip(X, S, dX, dS))
            sigma = min(1.0, max(0.0, gap_aff / gap)) ** 3 if gap > 0 else 0.0
        else:
            sigma = 0.0
        # corrector
        Rc = []
        for G, Gi, lam, a, c in zip(Gs, Ginv, lams, dX, dS):
            dXt = Gi @ a @ Gi.T
            dSt = G.T @ c @ G
            Rt = -(dXt @ dSt + dSt @ dXt)
            Rt[np.diag_indices_from(Rt)] += 2 * sigma * mu - 2 * lam ** 2
            D = Rt / (lam[:, None] + lam[None, :])
            Rc.append(_sym(G @ D @ G.T))
        dX, dxf, dy, dS = direction(Rc)
        ap, ad = steps(dX, dS)
        if not np.isfinite(ap * ad) or not all(np.all(np.isfinite(D)) for D in dX + dS):
            status = NUMERICAL_FAILURE
            break
        X = [_sym(Xj + ap * D) for Xj, D in zip(X, dX)]
        xf = xf + ap * dxf
        y = y + ad * dy
        S = [_sym(Sj + ad * D) for Sj, D in zip(S, dS)]
        small_steps = small_steps + 1 if max(ap, ad) < 1e-8 else 0
        if small_steps >= 3:
            status = NUMERICAL_FAILURE
            break

    if status in (MAX_ITERATIONS, NUMERICAL_FAILURE) and best is not None:
        # fall back to the most accurate iterate seen; late iterations can drift
        _, X, xf, y, S, res, _ = best
        score = max(res["primal_feas"], res["dual_feas"], res["relative_gap"])
        if score <= ACCEPT_TOL:
            status = OPTIMAL
        elif score <= NEAR_TOL:
            status = NEAR_OPTIMAL
    pobj = float(sum(np.sum(C * Xj) for C, Xj in zip(Cs, X)) + cf @ xf)
    dobj = float(b @ y)
    return SdpSolution(status, X, xf, y, S, pobj, dobj, res, it, time.perf_counter() - t0)


# ---------------------------------------------------------------------------
# triplet text format


def dump_triplets(problem: SdpProblem, path: str | Path) -> None:
    """Write ``problem`` as sparse triplets.

    Line types after the two header lines::

        b <i> <value>                         right-hand side, i = 1..m
        <i> <block> <row> <col> <value>       i = 0 is the objective, 1..m constraints

    PSD blocks are numbered from 1 and store their upper triangle (1-based
    row/col).  Block 0 holds free variables with row = col = variable index.
    """
    P = problem
    lines = ["# sdp-triplet v1",
             f"# m={P.m} blocks={','.join(map(str, P.block_sizes))} free={P.n_free}"]
    for i, v in enumerate(P.b):
        if v != 0.0:
            lines.append(f"b {i + 1} {float(v)!r}")
    for k, v in enumerate(P.c_free):
        if v != 0.0:
            lines.append(f"0 0 {k + 1} {k + 1} {float(v)!r}")
    for j, C in enumerate(P.C_blocks):
        r, c = np.nonzero(np.triu(C))
        for a, bb in zip(r, c):
            lines.append(f"0 {j + 1} {a + 1} {bb + 1} {float(C[a, bb])!r}")
    F = P.A_free.tocoo()
    for i, k, v in sorted(zip(F.row.tolist(), F.col.tolist(), F.data.tolist())):
        lines.append(f"{i + 1} 0 {k + 1} {k + 1} {v!r}")
    for j, (A, n) in enumerate(zip(P.A_blocks, P.block_sizes)):
        A = A.tocoo()
        ent = sorted((i, c // n, c % n, v) for i, c, v in zip(A.row.tolist(), A.col.tolist(), A.data.tolist()) if c // n <= c % n)
        for i, a, bb, v in ent:
            lines.append(f"{i + 1} {j + 1} {a + 1} {bb + 1} {v!r}")
    Path(path).write_text("\n".join(lines) + "\n")


def load_triplets(path: str | Path) -> SdpProblem:
    text = Path(path).read_text().splitlines()
    header = dict(kv.split("=") for kv in text[1].lstrip("# ").split())
    m = int(header["m"])
    sizes = [int(s) for s in header["blocks"].split(",") if s]
    n_free = int(header["free"])
    asm = SdpAssembler()
    for n in sizes:
        asm.add_block(n)
    asm.add_free(n_free)
    asm.set_rows(m)
    Cs = [np.zeros((n, n)) for n in sizes]
    for line in text[2:]:
        tok = line.split()
        if not tok:
            continue
        if tok[0] == "b":
            asm.set_rhs(int(tok[1]) - 1, float(tok[2]))
            continue
        i, blk, r, c = (int(t) for t in tok[:4])
        v = float(tok[4])
        if i == 0:
            if blk == 0:
                asm.cost_free(r - 1, v)
            else:
                Cs[blk - 1][r - 1, c - 1] = Cs[blk - 1][c - 1, r - 1] = v
        elif blk == 0:
            asm.free_entries([i - 1], [r - 1], [v])
        else:
            rr, cc = r - 1, c - 1
            if rr == cc:
                asm.block_entries(blk - 1, [i - 1], [rr], [cc], [v])
            else:
                asm.block_entries(blk - 1, [i - 1, i - 1], [rr, cc], [cc, rr], [v, v])
    for j, C in enumerate(Cs):
        asm.cost_block(j, C)
    return asm.build()
