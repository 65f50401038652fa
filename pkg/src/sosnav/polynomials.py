"""Sparse multivariate polynomials, monomial bases, and Gram index maps.

Monomials are exponent tuples; polynomials are exponent-tuple -> coefficient
maps in canonical form (zero coefficients dropped).  The monomial order is
graded lexicographic everywhere, which keeps the row ordering of the
coefficient-matching equality constraints deterministic.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

Monomial = tuple[int, ...]


def monomial_degree(m: Monomial) -> int:
    return sum(m)


def _grlex_key(m: Monomial):
    # Graded lex: total degree first, then x1 > x2 > ... within a degree.
    return (sum(m), tuple(-e for e in m))


@dataclass(frozen=True)
class MonomialBasis:
    """All monomials of degree <= ``degree`` in ``dimension`` variables, graded lex."""

    dimension: int
    degree: int
    monomials: tuple[Monomial, ...] = field(init=False)

    def __post_init__(self):
        if self.dimension < 1:
            raise ValueError(f"dimension must be >= 1, got {self.dimension}")
        if self.degree < 0:
            raise ValueError(f"degree must be >= 0, got {self.degree}")
        mons = []
        for d in range(self.degree + 1):
            mons.extend(_exponents_of_degree(self.dimension, d))
        mons.sort(key=_grlex_key)
        object.__setattr__(self, "monomials", tuple(mons))

    def __len__(self) -> int:
        return len(self.monomials)

    def index(self, m: Monomial) -> int:
        return self._index_map()[m]

    def _index_map(self) -> dict[Monomial, int]:
        # Cached lazily; frozen dataclass so stash on the instance dict via object.__setattr__.
        cached = self.__dict__.get("_idx")
        if cached is None:
            cached = {m: i for i, m in enumerate(self.monomials)}
            object.__setattr__(self, "_idx", cached)
        return cached

    def __contains__(self, m: Monomial) -> bool:
        return m in self._index_map()


def _exponents_of_degree(dimension: int, degree: int) -> list[Monomial]:
    """All exponent tuples with the given total degree."""
    if dimension == 1:
        return [(degree,)]
    out = []
    for first in range(degree, -1, -1):
        for rest in _exponents_of_degree(dimension - 1, degree - first):
            out.append((first,) + rest)
    return out


def basis(dimension: int, degree: int) -> MonomialBasis:
    """Graded-lex basis of all monomials with degree <= ``degree``.

    Size is C(dimension + degree, degree).
    """
    return MonomialBasis(dimension, degree)


def basis_size(dimension: int, degree: int) -> int:
    return math.comb(dimension + degree, degree)


@dataclass(frozen=True)
class Polynomial:
    """Sparse real polynomial: map from exponent tuple to coefficient.

    Canonical form: no zero coefficients, all exponent tuples of length
    ``dimension``.
    """

    dimension: int
    terms: dict[Monomial, float]

    def __post_init__(self):
        clean = {}
        for m, c in self.terms.items():
            if len(m) != self.dimension:
                raise ValueError(f"monomial {m} has wrong length for dimension {self.dimension}")
            if any(e < 0 for e in m):
                raise ValueError(f"negative exponent in {m}")
            c = float(c)
            if c != 0.0:
                clean[tuple(int(e) for e in m)] = c
        object.__setattr__(self, "terms", clean)

    @property
    def degree(self) -> int:
        if not self.terms:
            return 0
        return max(sum(m) for m in self.terms)

    def __call__(self, x) -> float:
        return evaluate(self, x)

    def __add__(self, other: "Polynomial") -> "Polynomial":
        if self.dimension != other.dimension:
            raise ValueError("dimension mismatch")
        terms = dict(self.terms)
        for m, c in other.terms.items():
            terms[m] = terms.get(m, 0.0) + c
        return Polynomial(self.dimension, terms)

    def __sub__(self, other: "Polynomial") -> "Polynomial":
        return self + other.scale(-1.0)

    def scale(self, a: float) -> "Polynomial":
        return Polynomial(self.dimension, {m: a * c for m, c in self.terms.items()})

    def __mul__(self, other: "Polynomial") -> "Polynomial":
        return multiply(self, other)

    @staticmethod
    def constant(dimension: int, value: float) -> "Polynomial":
        return Polynomial(dimension, {(0,) * dimension: value})

    @staticmethod
    def coordinate(dimension: int, i: int) -> "Polynomial":
        e = [0] * dimension
        e[i] = 1
        return Polynomial(dimension, {tuple(e): 1.0})

    @staticmethod
    def from_affine(constant: float, linear, dimension: int | None = None) -> "Polynomial":
        """constant + linear . x"""
        linear = np.asarray(linear, dtype=float)
        dim = dimension if dimension is not None else linear.shape[0]
        terms: dict[Monomial, float] = {(0,) * dim: float(constant)}
        for i, a in enumerate(linear):
            e = [0] * dim
            e[i] = 1
            terms[tuple(e)] = float(a)
        return Polynomial(dim, terms)

    def to_records(self) -> list[dict]:
        """Serialization used by scenario files: [{exponents, coef}]."""
        ordered = sorted(self.terms.items(), key=lambda t: _grlex_key(t[0]))
        return [{"exponents": list(m), "coef": c} for m, c in ordered]

    @staticmethod
    def from_records(records: list[dict], dimension: int) -> "Polynomial":
        terms: dict[Monomial, float] = {}
        for rec in records:
            m = tuple(int(e) for e in rec["exponents"])
            terms[m] = terms.get(m, 0.0) + float(rec["coef"])
        return Polynomial(dimension, terms)


def evaluate(f: Polynomial, x) -> float:
    """Value of f at a point (plain term-by-term evaluation)."""
    x = np.asarray(x, dtype=float)
    if x.shape != (f.dimension,):
        raise ValueError(f"point has shape {x.shape}, expected ({f.dimension},)")
    total = 0.0
    for m, c in f.terms.items():
        v = c
        for xi, e in zip(x, m):
            if e:
                v *= xi ** e
        total += v
    return total


def multiply(f: Polynomial, g: Polynomial) -> Polynomial:
    """Exact symbolic product in canonical form."""
    if f.dimension != g.dimension:
        raise ValueError("dimension mismatch")
    terms: dict[Monomial, float] = {}
    for mf, cf in f.terms.items():
        for mg, cg in g.terms.items():
            m = tuple(a + b for a, b in zip(mf, mg))
            terms[m] = terms.get(m, 0.0) + cf * cg
    return Polynomial(f.dimension, terms)


def coef_vector(f: Polynomial, b: MonomialBasis) -> np.ndarray:
    """Coefficient vector of f in basis b, so that f = c^T [x].

    Rejects polynomials whose degree exceeds the basis degree.
    """
    if f.dimension != b.dimension:
        raise ValueError("dimension mismatch")
    if f.degree > b.degree:
        raise ValueError(f"degree {f.degree} exceeds basis degree {b.degree}")
    c = np.zeros(len(b))
    idx = b._index_map()
    for m, v in f.terms.items():
        c[idx[m]] = v
    return c


def reconstruct(c, b: MonomialBasis) -> Polynomial:
    """Inverse of coef_vector."""
    c = np.asarray(c, dtype=float)
    if c.shape != (len(b),):
        raise ValueError("coefficient vector length mismatch")
    return Polynomial(b.dimension, {m: c[i] for i, m in enumerate(b.monomials)})


@dataclass(frozen=True)
class GramIndexMap:
    """Index map from Gram-matrix positions to product monomials.

    For a half basis [x] of degree d, entries[l] lists every (row, col)
    position of a symmetric len([x]) x len([x]) matrix X whose basis product
    [x]_row * [x]_col equals the l-th monomial of the degree-2d full basis,
    so that  sum_l <A_l, X> mu_l(x) = [x]^T X [x]  with A_l the 0/1 indicator
    of entries[l].
    """

    half_basis: MonomialBasis
    full_basis: MonomialBasis = field(init=False)
    entries: tuple[tuple[tuple[int, int], ...], ...] = field(init=False)

    def __post_init__(self):
        hb = self.half_basis
        fb = MonomialBasis(hb.dimension, 2 * hb.degree)
        idx = fb._index_map()
        buckets: list[list[tuple[int, int]]] = [[] for _ in range(len(fb))]
        for a, b_ in itertools.product(range(len(hb)), repeat=2):
            prod = tuple(p + q for p, q in zip(hb.monomials[a], hb.monomials[b_]))
            buckets[idx[prod]].append((a, b_))
        object.__setattr__(self, "full_basis", fb)
        object.__setattr__(self, "entries", tuple(tuple(bk) for bk in buckets))

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Vector of <A_l, X> over the full basis: coefficient list of [x]^T X [x]."""
        out = np.zeros(len(self.full_basis))
        for l, bucket in enumerate(self.entries):
            out[l] = sum(X[a, b] for a, b in bucket)
        return out


def gram_index_map(b: MonomialBasis) -> GramIndexMap:
    return GramIndexMap(b)
