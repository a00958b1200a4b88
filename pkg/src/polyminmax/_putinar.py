"""Coefficient-matching assembly shared by both relaxation stages.

Rows of the SDP are monomials.  Every unknown (Gram block, free multiplier
coefficient, free scalar) contributes to the rows of the monomials it
produces, and the right-hand side is a fixed polynomial.  Rows are numbered
in graded-lex order once assembly is complete, so the resulting problem does
not depend on the order in which blocks were added.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .poly_core import Exps, Polynomial, VariableSpace, _exps_sort_key, add_exps
from .sdp_solver import SdpAssembler, SdpProblem


class CoverageError(ValueError):
    """A term or constraint is not covered by any clique of the sparsity pattern."""


class DegreeError(ValueError):
    """The relaxation order is too small for the polynomial degrees involved."""


@dataclass
class BlockInfo:
    kind: str
    clique: int
    basis: list[Exps]
    weight: Polynomial
    label: str = ""


@dataclass
class FreeGroup:
    kind: str
    first: int
    basis: list[Exps]
    weight: Polynomial | None
    clique: int = -1
    label: str = ""


@dataclass
class Assembly:
    problem: SdpProblem
    rows: list[Exps]
    row_of: dict[Exps, int]
    blocks: list[BlockInfo]
    free_groups: list[FreeGroup]
    meta: dict = field(default_factory=dict)


class CertificateAssembler:
    def __init__(self, space: VariableSpace):
        self.space = space
        self._ids: dict[Exps, int] = {}
        self._monos: list[Exps] = []
        self._touched: set[int] = set()
        self._blocks: list[tuple[BlockInfo, list, list, list, list]] = []
        self._free: list[tuple[FreeGroup, list, list, list]] = []
        self._n_free = 0
        self._free_cost: dict[int, float] = {}
        self._rhs: dict[int, float] = {}
        self._rhs_labels: dict[int, str] = {}

    def _id(self, e: Exps) -> int:
        k = self._ids.get(e)
        if k is None:
            k = len(self._monos)
            self._ids[e] = k
            self._monos.append(e)
        return k

    def add_gram(self, weight: Polynomial, basis: list[Exps], sign: float, kind: str, clique: int, label: str = "") -> int:
        n = len(basis)
        rows, ii, jj, vals = [], [], [], []
        wterms = list(weight.items())
        for a in range(n):
            for b in range(a, n):
                s = add_exps(basis[a], basis[b])
                for e, c in wterms:
                    r = self._id(add_exps(s, e))
                    self._touched.add(r)
                    rows.append(r)
                    ii.append(a)
                    jj.append(b)
                    vals.append(sign * c)
                    if a != b:
                        rows.append(r)
                        ii.append(b)
                        jj.append(a)
                        vals.append(sign * c)
        info = BlockInfo(kind, clique, list(basis), weight, label)
        self._blocks.append((info, rows, ii, jj, vals))
        return len(self._blocks) - 1

    def add_free_multiplier(self, weight: Polynomial, basis: list[Exps], sign: float, kind: str, clique: int,
                            label: str = "", costs=None) -> int:
        first = self._n_free
        self._n_free += len(basis)
        rows, cols, vals = [], [], []
        for k, mono in enumerate(basis):
            for e, c in weight.items():
                r = self._id(add_exps(mono, e))
                self._touched.add(r)
                rows.append(r)
                cols.append(first + k)
                vals.append(sign * c)
        if costs is not None:
            for k, c in enumerate(costs):
                if c != 0.0:
                    self._free_cost[first + k] = float(c)
        self._free.append((FreeGroup(kind, first, list(basis), weight, clique, label), rows, cols, vals))
        return first

    def add_rhs(self, p: Polynomial, label: str = "objective"):
        for e, c in p.items():
            r = self._id(e)
            self._rhs[r] = self._rhs.get(r, 0.0) + c
            self._rhs_labels.setdefault(r, label)

    def build(self, meta: dict | None = None) -> Assembly:
        for r, c in self._rhs.items():
            if r not in self._touched and c != 0.0:
                raise CoverageError(f"{self._rhs_labels[r]} term {self._monos[r]} is not covered by any clique")
        order = sorted(range(len(self._monos)), key=lambda k: _exps_sort_key(self._monos[k]))
        perm = np.empty(len(order), dtype=np.int64)
        perm[order] = np.arange(len(order))
        rows = [self._monos[k] for k in order]
        asm = SdpAssembler()
        asm.set_rows(len(rows))
        infos = []
        for info, r, ii, jj, vals in self._blocks:
            j = asm.add_block(len(info.basis))
            asm.block_entries(j, perm[np.asarray(r, dtype=np.int64)], ii, jj, vals)
            infos.append(info)
        asm.add_free(self._n_free)
        groups = []
        for group, r, cols, vals in self._free:
            if r:
                asm.free_entries(perm[np.asarray(r, dtype=np.int64)], cols, vals)
            groups.append(group)
        for k, c in self._free_cost.items():
            asm.cost_free(k, c)
        for r, c in self._rhs.items():
            asm.set_rhs(int(perm[r]), c)
        problem = asm.build(meta)
        return Assembly(problem, rows, {e: i for i, e in enumerate(rows)}, infos, groups, meta or {})


def gram_form(basis: list[Exps], G: np.ndarray, space: VariableSpace) -> Polynomial:
    """The polynomial m(x)^T G m(x) for the monomial vector ``basis``."""
    out: dict[Exps, float] = {}
    n = len(basis)
    for a in range(n):
        for b in range(n):
            e = add_exps(basis[a], basis[b])
            out[e] = out.get(e, 0.0) + G[a, b]
    return Polynomial(space, out)


def normalized(p: Polynomial) -> tuple[Polynomial, float]:
    s = p.max_abs_coef()
    if s == 0.0:
        return p, 1.0
    return p * (1.0 / s), s


def half_degree(p: Polynomial) -> int:
    return (p.degree() + 1) // 2


def covering_clique(varset: set[int], cliques: list[frozenset[int]]) -> int:
    for k, c in enumerate(cliques):
        if varset <= c:
            return k
    return -1
