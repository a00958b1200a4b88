"""Moments of the uniform measure on a box, Riesz functional, moment and localizing matrices."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .poly_core import Exps, Polynomial, VariableSpace, add_exps, monomial_basis


@dataclass(frozen=True)
class Box:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float)).copy()
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float)).copy()
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError("lower and upper must be vectors of equal length")
        if not np.all(lo < hi):
            raise ValueError(f"box needs lower < upper in every coordinate, got {lo} / {hi}")
        lo.setflags(write=False)
        hi.setflags(write=False)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def cube(cls, n: int, lo: float = -1.0, hi: float = 1.0) -> "Box":
        return cls(np.full(n, lo), np.full(n, hi))

    @property
    def dim(self) -> int:
        return len(self.lower)

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lower + self.upper)

    @property
    def half_width(self) -> np.ndarray:
        return 0.5 * (self.upper - self.lower)

    def contains(self, x, tol: float = 0.0) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.lower - tol) and np.all(x <= self.upper + tol))

    def padded(self, pad) -> "Box":
        pad = np.broadcast_to(np.asarray(pad, dtype=float), self.lower.shape)
        return Box(self.lower - pad, self.upper + pad)

    def to_unit(self, x):
        """Affine map of the box onto [-1, 1]^n."""
        return (np.asarray(x, dtype=float) - self.center) / self.half_width

    def from_unit(self, s):
        return self.center + self.half_width * np.asarray(s, dtype=float)

    def tolist(self) -> list[list[float]]:
        return [[float(a), float(b)] for a, b in zip(self.lower, self.upper)]


@dataclass
class MomentSequence:
    """Moments ``z_k`` indexed by exponent vectors of ``space`` up to total degree ``order``."""
    space: VariableSpace
    order: int
    values: dict[Exps, float] = field(default_factory=dict)

    def __getitem__(self, exps: Exps) -> float:
        return self.values[tuple(exps)]

    def get(self, exps: Exps, default: float = 0.0) -> float:
        return self.values.get(tuple(exps), default)

    def first_order(self) -> np.ndarray:
        n = self.space.n
        return np.array([self.values[tuple(int(i == k) for i in range(n))] for k in range(n)])


def box_moment(box: Box, beta) -> float:
    beta = np.asarray(beta, dtype=int)
    if beta.shape != (box.dim,):
        raise ValueError(f"exponent of length {beta.shape} does not match box dimension {box.dim}")
    k = beta + 1
    per_axis = (box.upper ** k - box.lower ** k) / (k * (box.upper - box.lower))
    return float(np.prod(per_axis))


def moment_vector(box: Box, order: int, space: VariableSpace | None = None) -> MomentSequence:
    space = space or VariableSpace.generic(box.dim, "theta")
    if space.n != box.dim:
        raise ValueError("space and box dimensions differ")
    if order < 0:
        raise ValueError("order must be >= 0")
    return MomentSequence(space, order, {b: box_moment(box, b) for b in monomial_basis(space, order)})


def riesz(z: MomentSequence, p: Polynomial) -> float:
    """Linear functional sum_k p_k z_k."""
    if p.degree() > z.order:
        raise ValueError(f"polynomial degree {p.degree()} exceeds moment order {z.order}")
    if p.space.n != z.space.n:
        raise ValueError("polynomial and moments live in different spaces")
    return float(sum(c * z.values[e] for e, c in p.items()))


def moment_matrix(z: MomentSequence, tau: int) -> np.ndarray:
    if 2 * tau > z.order:
        raise ValueError(f"moment matrix of order {tau} needs moments up to {2 * tau}, have {z.order}")
    basis = monomial_basis(z.space, tau)
    n = len(basis)
    M = np.empty((n, n))
    for i in range(n):
        for j in range(i, n):
            M[i, j] = M[j, i] = z.values[add_exps(basis[i], basis[j])]
    return M


def localizing_matrix(z: MomentSequence, d: Polynomial, order: int) -> np.ndarray:
    """Matrix with entries L_z(d * x^(b_i + b_j)) over the degree-``order`` basis."""
    if 2 * order + d.degree() > z.order:
        raise ValueError("moment order too small for this localizing matrix")
    basis = monomial_basis(z.space, order)
    n = len(basis)
    M = np.zeros((n, n))
    for i in range(n):
        for j in range(i, n):
            s = add_exps(basis[i], basis[j])
            v = sum(c * z.values[add_exps(s, e)] for e, c in d.items())
            M[i, j] = M[j, i] = v
    return M


def moments_from_atoms(space: VariableSpace, atoms, weights, order: int) -> MomentSequence:
    """Moment sequence of a finite atomic measure."""
    atoms = np.atleast_2d(np.asarray(atoms, dtype=float))
    w = np.asarray(weights, dtype=float)
    vals = {}
    for b in monomial_basis(space, order):
        vals[b] = float(np.sum(w * np.prod(atoms ** np.array(b), axis=1)))
    return MomentSequence(space, order, vals)


def moments_from_mapping(space: VariableSpace, order: int, values: Mapping[Exps, float]) -> MomentSequence:
    missing = [b for b in monomial_basis(space, order) if tuple(b) not in values]
    if missing:
        raise ValueError(f"moment sequence is missing {len(missing)} entries, e.g. {missing[0]}")
    return MomentSequence(space, order, {tuple(k): float(v) for k, v in values.items()})
