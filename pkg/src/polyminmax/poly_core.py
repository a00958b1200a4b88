"""Sparse multivariate polynomials over named variable spaces.

A :class:`VariableSpace` is an ordered tuple of variable names split into a
leading parameter block (``theta``) and a trailing block (``alpha``).  The
trailing block holds the uncertainty variables of a min-max problem, or the
lifting variables of a projected set.

Monomials are exponent tuples.  Every enumeration in the package uses the
graded-lexicographic order returned by :func:`monomial_basis`: total degree
first, then larger leading exponents first, e.g. ``1, x, y, x^2, xy, y^2``.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

DROP_TOL = 1e-14

Exps = tuple[int, ...]


class SpaceMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class VariableSpace:
    names: tuple[str, ...]
    theta_count: int
    alpha_count: int

    def __post_init__(self):
        object.__setattr__(self, "names", tuple(self.names))
        if len(set(self.names)) != len(self.names):
            raise ValueError(f"duplicate variable names in {self.names}")
        if self.theta_count < 0 or self.alpha_count < 0:
            raise ValueError("block sizes must be nonnegative")
        if self.theta_count + self.alpha_count != len(self.names):
            raise ValueError("theta_count + alpha_count must equal the number of names")

    @classmethod
    def from_blocks(cls, theta: Sequence[str], alpha: Sequence[str] = ()) -> "VariableSpace":
        return cls(tuple(theta) + tuple(alpha), len(theta), len(alpha))

    @classmethod
    def generic(cls, n: int, prefix: str = "x") -> "VariableSpace":
        return cls(tuple(f"{prefix}{i + 1}" for i in range(n)), n, 0)

    @property
    def n(self) -> int:
        return len(self.names)

    @property
    def theta_names(self) -> tuple[str, ...]:
        return self.names[: self.theta_count]

    @property
    def alpha_names(self) -> tuple[str, ...]:
        return self.names[self.theta_count:]

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise KeyError(f"unknown variable {name!r}") from None

    def theta_space(self) -> "VariableSpace":
        return VariableSpace(self.theta_names, self.theta_count, 0)


def _exps_sort_key(e: Exps):
    return (sum(e), tuple(-k for k in e))


def exps_of_degree(n: int, degree: int) -> list[Exps]:
    """All exponent tuples of length ``n`` with total degree exactly ``degree``."""
    if n == 0:
        return [()] if degree == 0 else []
    out = []
    for combo in itertools.combinations_with_replacement(range(n), degree):
        e = [0] * n
        for i in combo:
            e[i] += 1
        out.append(tuple(e))
    out.sort(key=_exps_sort_key)
    return out


def monomial_basis(space: VariableSpace, max_degree: int, block: str = "all") -> list[Exps]:
    """Exponent vectors of total degree <= ``max_degree`` in graded-lex order.

    ``block`` restricts the monomials to the ``"theta-only"`` or
    ``"alpha-only"`` block; the other block's entries are zero.
    """
    if max_degree < 0:
        raise ValueError("max_degree must be >= 0")
    if block == "all":
        active = list(range(space.n))
    elif block == "theta-only":
        active = list(range(space.theta_count))
    elif block == "alpha-only":
        active = list(range(space.theta_count, space.n))
    else:
        raise ValueError(f"unknown block {block!r}")
    return basis_on(space.n, active, max_degree)


def basis_on(n: int, active: Sequence[int], max_degree: int) -> list[Exps]:
    """Graded-lex basis in ``n`` variables using only the ``active`` indices."""
    active = sorted(active)
    out = []
    for d in range(max_degree + 1):
        for sub in exps_of_degree(len(active), d):
            e = [0] * n
            for i, k in zip(active, sub):
                e[i] = k
            out.append(tuple(e))
    return out


def basis_size(n: int, d: int) -> int:
    return math.comb(n + d, d)


def add_exps(a: Exps, b: Exps) -> Exps:
    return tuple(x + y for x, y in zip(a, b))


def _clean(terms: Mapping[Exps, float]) -> dict[Exps, float]:
    return {e: float(c) for e, c in terms.items() if abs(c) >= DROP_TOL}


class Polynomial:
    """Immutable sparse polynomial with real coefficients.

    ``terms`` maps exponent tuples to coefficients; coefficients whose
    magnitude falls under ``DROP_TOL`` are discarded on construction.
    """

    __slots__ = ("space", "_terms", "_degree")

    def __init__(self, space: VariableSpace, terms: Mapping[Exps, float] | None = None):
        terms = dict(terms or {})
        for e in terms:
            if len(e) != space.n or any(k < 0 for k in e):
                raise SpaceMismatchError(f"exponent {e} does not fit space of {space.n} variables")
        self.space = space
        self._terms = _clean({tuple(int(k) for k in e): c for e, c in terms.items()})
        self._degree = max((sum(e) for e in self._terms), default=0)

    # construction helpers
    @classmethod
    def zero(cls, space: VariableSpace) -> "Polynomial":
        return cls(space)

    @classmethod
    def constant(cls, space: VariableSpace, c: float) -> "Polynomial":
        return cls(space, {(0,) * space.n: c})

    @classmethod
    def variable(cls, space: VariableSpace, var: str | int) -> "Polynomial":
        i = space.index(var) if isinstance(var, str) else int(var)
        e = [0] * space.n
        e[i] = 1
        return cls(space, {tuple(e): 1.0})

    @classmethod
    def monomial(cls, space: VariableSpace, exps: Exps, coef: float = 1.0) -> "Polynomial":
        return cls(space, {tuple(exps): coef})

    @property
    def terms(self) -> dict[Exps, float]:
        return dict(self._terms)

    def items(self):
        return self._terms.items()

    def __len__(self):
        return len(self._terms)

    def is_zero(self) -> bool:
        return not self._terms

    def degree(self) -> int:
        return self._degree

    def coefficient(self, exps: Exps) -> float:
        return self._terms.get(tuple(exps), 0.0)

    def max_abs_coef(self) -> float:
        return max((abs(c) for c in self._terms.values()), default=0.0)

    def variables(self) -> set[int]:
        """Indices of variables with a nonzero exponent in some term."""
        used = set()
        for e in self._terms:
            used.update(i for i, k in enumerate(e) if k)
        return used

    def depends_on_theta(self) -> bool:
        return any(i < self.space.theta_count for i in self.variables())

    # arithmetic
    def _check(self, other: "Polynomial"):
        if other.space != self.space:
            raise SpaceMismatchError("polynomials live in different variable spaces")

    def _coerce(self, other) -> "Polynomial":
        if isinstance(other, Polynomial):
            self._check(other)
            return other
        if isinstance(other, (int, float, np.floating, np.integer)):
            return Polynomial.constant(self.space, float(other))
        return NotImplemented

    def __add__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        out = dict(self._terms)
        for e, c in other._terms.items():
            out[e] = out.get(e, 0.0) + c
        return Polynomial(self.space, out)

    __radd__ = __add__

    def __neg__(self):
        return Polynomial(self.space, {e: -c for e, c in self._terms.items()})

    def __sub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, (int, float, np.floating, np.integer)):
            return Polynomial(self.space, {e: c * float(other) for e, c in self._terms.items()})
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        out: dict[Exps, float] = {}
        for e1, c1 in self._terms.items():
            for e2, c2 in other._terms.items():
                e = add_exps(e1, e2)
                out[e] = out.get(e, 0.0) + c1 * c2
        return Polynomial(self.space, out)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return self * (1.0 / float(other))

    def __pow__(self, k: int):
        if k < 0:
            raise ValueError("negative powers are not polynomials")
        out = Polynomial.constant(self.space, 1.0)
        for _ in range(k):
            out = out * self
        return out

    def __eq__(self, other):
        if not isinstance(other, Polynomial):
            return NotImplemented
        return self.space == other.space and self._terms == other._terms

    def __hash__(self):
        return hash((self.space, frozenset(self._terms.items())))

    def allclose(self, other: "Polynomial", tol: float = 1e-9) -> bool:
        self._check(other)
        return (self - other).max_abs_coef() <= tol

    # evaluation
    def arrays(self) -> tuple[np.ndarray, np.ndarray]:
        if not self._terms:
            return np.zeros((0, self.space.n), dtype=int), np.zeros(0)
        exps = np.array(list(self._terms.keys()), dtype=int).reshape(len(self._terms), self.space.n)
        return exps, np.array(list(self._terms.values()))

    def __call__(self, point) -> float | np.ndarray:
        return poly_eval(self, point)

    # transformations
    def embed(self, space: VariableSpace, mapping: Mapping[str, str] | None = None) -> "Polynomial":
        """Re-express in ``space``; variables are matched by (optionally renamed) name."""
        mapping = mapping or {}
        target = [space.index(mapping.get(nm, nm)) for nm in self.space.names]
        out: dict[Exps, float] = {}
        for e, c in self._terms.items():
            ne = [0] * space.n
            for i, k in enumerate(e):
                if k:
                    ne[target[i]] += k
            ne = tuple(ne)
            out[ne] = out.get(ne, 0.0) + c
        return Polynomial(space, out)

    def restrict(self, space: VariableSpace) -> "Polynomial":
        """Move to a space holding a subset of the variables (by name); used variables must exist there."""
        for i in self.variables():
            if self.space.names[i] not in space.names:
                raise SpaceMismatchError(f"variable {self.space.names[i]!r} missing from target space")
        keep = [(i, space.index(nm)) for i, nm in enumerate(self.space.names) if nm in space.names]
        out = {}
        for e, c in self._terms.items():
            ne = [0] * space.n
            for i, j in keep:
                ne[j] = e[i]
            out[tuple(ne)] = c
        return Polynomial(space, out)

    def derivative(self, var: str | int) -> "Polynomial":
        i = self.space.index(var) if isinstance(var, str) else int(var)
        out = {}
        for e, c in self._terms.items():
            if e[i]:
                ne = list(e)
                ne[i] -= 1
                out[tuple(ne)] = c * e[i]
        return Polynomial(self.space, out)

    def substitute_affine(self, shift, scale) -> "Polynomial":
        """Return ``p(shift + scale * x)`` componentwise."""
        shift = np.broadcast_to(np.asarray(shift, dtype=float), (self.space.n,))
        scale = np.broadcast_to(np.asarray(scale, dtype=float), (self.space.n,))
        lin = [Polynomial(self.space, {(0,) * self.space.n: shift[i]})
               + Polynomial.variable(self.space, i) * scale[i] for i in range(self.space.n)]
        powers: dict[tuple[int, int], Polynomial] = {}

        def pw(i, k):
            if (i, k) not in powers:
                powers[(i, k)] = lin[i] ** k
            return powers[(i, k)]

        acc: dict[Exps, float] = {}
        for e, c in self._terms.items():
            term = Polynomial.constant(self.space, c)
            for i, k in enumerate(e):
                if k:
                    term = term * pw(i, k)
            for te, tc in term._terms.items():
                acc[te] = acc.get(te, 0.0) + tc
        return Polynomial(self.space, acc)

    def to_record(self) -> dict:
        ordered = sorted(self._terms.items(), key=lambda kv: _exps_sort_key(kv[0]))
        return {"terms": [{"exps": list(e), "coef": c} for e, c in ordered]}

    @classmethod
    def from_record(cls, space: VariableSpace, record: Mapping) -> "Polynomial":
        terms: dict[Exps, float] = {}
        for k, t in enumerate(record.get("terms", [])):
            try:
                e = tuple(int(x) for x in t["exps"])
                c = float(t["coef"])
            except (KeyError, TypeError, ValueError) as exc:
                raise ValueError(f"term {k}: malformed record ({exc})") from None
            if len(e) != space.n:
                raise ValueError(f"term {k}: expected {space.n} exponents, got {len(e)}")
            if any(x < 0 for x in e) or any(float(x) != int(x) for x in t["exps"]):
                raise ValueError(f"term {k}: exponents must be nonnegative integers")
            if not math.isfinite(c):
                raise ValueError(f"term {k}: coefficient is not finite")
            terms[e] = terms.get(e, 0.0) + c
        return cls(space, terms)

    def __repr__(self):
        if not self._terms:
            return "Polynomial(0)"
        parts = []
        for e, c in sorted(self._terms.items(), key=lambda kv: _exps_sort_key(kv[0])):
            mono = "*".join(f"{self.space.names[i]}^{k}" if k > 1 else self.space.names[i]
                            for i, k in enumerate(e) if k)
            parts.append(f"{c:+.6g}" + (f"*{mono}" if mono else ""))
        return "Polynomial(" + " ".join(parts) + ")"


def poly_add(p: Polynomial, q: Polynomial) -> Polynomial:
    p._check(q)
    return p + q


def poly_mul(p: Polynomial, q: Polynomial) -> Polynomial:
    p._check(q)
    return p * q


def poly_eval(p: Polynomial, point) -> float | np.ndarray:
    """Evaluate at one point (1-D) or at a batch of points (rows of a 2-D array)."""
    x = np.asarray(point, dtype=float)
    single = x.ndim == 1
    X = x.reshape(1, -1) if single else x
    if X.shape[1] != p.space.n:
        raise SpaceMismatchError(f"point has {X.shape[1]} coordinates, space has {p.space.n}")
    exps, coefs = p.arrays()
    if len(coefs) == 0:
        val = np.zeros(X.shape[0])
    else:
        val = np.zeros(X.shape[0])
        used = [i for i in range(p.space.n) if exps[:, i].any()]
        maxdeg = int(exps.max()) if exps.size else 0
        # power tables per used variable: pw[i][k] = x_i^k
        pows = {i: np.vander(X[:, i], maxdeg + 1, increasing=True) for i in used}
        for t in range(len(coefs)):
            m = np.full(X.shape[0], coefs[t])
            for i in used:
                k = exps[t, i]
                if k:
                    m = m * pows[i][:, k]
            val += m
    return float(val[0]) if single else val


def polys_from_exprs(space: VariableSpace, entries: Iterable[tuple[Mapping[str, int], float]]) -> Polynomial:
    """Build a polynomial from ``({name: power}, coef)`` pairs."""
    out: dict[Exps, float] = {}
    for powers, c in entries:
        e = [0] * space.n
        for nm, k in powers.items():
            e[space.index(nm)] += k
        e = tuple(e)
        out[e] = out.get(e, 0.0) + c
    return Polynomial(space, out)
