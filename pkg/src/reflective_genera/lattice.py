"""Exact linear algebra for positive definite integral lattices.

A lattice is stored by its Gram matrix on a fixed basis. Sublattices and
overlattices are described by basis matrices whose *columns* are coordinate
vectors with respect to that basis; their Gram matrix is ``X^T G X``.
"""

import logging
import math
from collections.abc import Iterable, Sequence
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property, reduce
from typing import Any

from sympy import Matrix, Rational
from sympy.matrices.normalforms import hermite_normal_form

from reflective_genera.utils.errors import InvalidScaleError, LatticeError

logger = logging.getLogger(__name__)

IntMatrix = tuple[tuple[int, ...], ...]
RatMatrix = tuple[tuple[Fraction, ...], ...]
RatVector = tuple[Fraction, ...]

MAX_RANK = 6


# =============================================================================
# Small exact helpers
# =============================================================================


def bareiss_minors(rows: Sequence[Sequence[int]]) -> list[int]:
    """Return the leading principal minors of a square integer matrix.

    Fraction-free Bareiss elimination; the k-th pivot is the k-th leading
    minor as long as no pivot vanishes earlier. A vanishing pivot stops the
    list early (callers treat that as "not positive definite").
    """
    a = [list(r) for r in rows]
    n = len(a)
    minors: list[int] = []
    prev = 1
    for k in range(n):
        pivot = a[k][k]
        minors.append(pivot)
        if pivot == 0:
            break
        for i in range(k + 1, n):
            for j in range(k + 1, n):
                a[i][j] = (a[i][j] * pivot - a[i][k] * a[k][j]) // prev
        prev = pivot
    return minors


def gram_of_basis(gram: Sequence[Sequence[Any]], columns: Sequence[Sequence[Any]]) -> RatMatrix:
    """Gram matrix of the vectors ``columns`` (given as coordinate tuples)."""
    n = len(gram)
    gx = [[sum((Fraction(gram[i][k]) * Fraction(c[k]) for k in range(n)), Fraction(0))
           for i in range(n)] for c in columns]
    return tuple(
        tuple(sum((Fraction(a[i]) * gx_b[i] for i in range(n)), Fraction(0)) for gx_b in gx)
        for a in columns
    )


def inner(gram: Sequence[Sequence[int]], u: Sequence[int], v: Sequence[int]) -> int:
    """Bilinear form b(u, v) for integer coordinate vectors."""
    n = len(u)
    return sum(u[i] * gram[i][j] * v[j] for i in range(n) for j in range(n) if u[i] and v[j])


def _as_fraction_matrix(rows: Sequence[Sequence[Any]]) -> RatMatrix:
    return tuple(tuple(Fraction(x) for x in row) for row in rows)


def _to_sympy(rows: Sequence[Sequence[Fraction]]) -> Matrix:
    return Matrix([[Rational(x.numerator, x.denominator) for x in row] for row in rows])


def _from_sympy(m: Matrix) -> RatMatrix:
    return tuple(
        tuple(Fraction(int(m[i, j].p), int(m[i, j].q)) for j in range(m.cols))
        for i in range(m.rows)
    )


# =============================================================================
# Types
# =============================================================================


@dataclass(frozen=True)
class RationalGram:
    """Symmetric matrix of rationals, e.g. the Gram matrix of a dual lattice."""

    gram: RatMatrix

    @property
    def rank(self) -> int:
        return len(self.gram)

    def is_integral(self) -> bool:
        return all(x.denominator == 1 for row in self.gram for x in row)

    def to_lattice(self) -> "GramLattice":
        """Convert to an integral lattice; raises if any entry is fractional."""
        if not self.is_integral():
            raise LatticeError("Gram matrix has non-integral entries")
        return GramLattice(tuple(tuple(int(x) for x in row) for row in self.gram))


@dataclass(frozen=True)
class GramLattice:
    """Positive definite integral lattice given by its Gram matrix."""

    gram: IntMatrix

    def __post_init__(self) -> None:
        gram = tuple(tuple(int(x) for x in row) for row in self.gram)
        object.__setattr__(self, "gram", gram)
        n = len(gram)
        if not 1 <= n <= MAX_RANK:
            raise LatticeError(f"rank {n} outside 1..{MAX_RANK}")
        if any(len(row) != n for row in gram):
            raise LatticeError("Gram matrix is not square")
        for i in range(n):
            for j in range(i):
                if gram[i][j] != gram[j][i]:
                    raise LatticeError("Gram matrix is not symmetric")
        minors = bareiss_minors(gram)
        if len(minors) < n or any(m <= 0 for m in minors):
            raise LatticeError("Gram matrix is not positive definite")
        self.__dict__["determinant"] = minors[-1]

    # -------------------------------------------------------------------------
    # Constructors
    # -------------------------------------------------------------------------

    @classmethod
    def identity(cls, n: int) -> "GramLattice":
        return cls(tuple(tuple(int(i == j) for j in range(n)) for i in range(n)))

    @classmethod
    def diagonal(cls, *entries: int) -> "GramLattice":
        n = len(entries)
        return cls(tuple(tuple(entries[i] if i == j else 0 for j in range(n)) for i in range(n)))

    @classmethod
    def from_rows(cls, rows: Iterable[Iterable[int]]) -> "GramLattice":
        return cls(tuple(tuple(r) for r in rows))

    @classmethod
    def from_text(cls, text: str) -> "GramLattice":
        """Parse whitespace-separated integer rows."""
        rows = [line.split() for line in text.strip().splitlines() if line.strip()]
        try:
            return cls(tuple(tuple(int(x) for x in row) for row in rows))
        except ValueError as e:
            raise LatticeError(f"Gram text is not integral: {e}") from e

    @classmethod
    def from_record(cls, record: dict[str, Any]) -> "GramLattice":
        """Build from ``{"rank": n, "entries": [row-major]}``."""
        n = int(record["rank"])
        entries = [int(x) for x in record["entries"]]
        if len(entries) != n * n:
            raise LatticeError(f"expected {n * n} entries, got {len(entries)}")
        return cls(tuple(tuple(entries[i * n:(i + 1) * n]) for i in range(n)))

    # -------------------------------------------------------------------------
    # Accessors
    # -------------------------------------------------------------------------

    @property
    def rank(self) -> int:
        return len(self.gram)

    @cached_property
    def determinant(self) -> int:
        return bareiss_minors(self.gram)[-1]

    def norm(self, v: Sequence[int]) -> int:
        return inner(self.gram, v, v)

    def to_text(self) -> str:
        return "\n".join(" ".join(str(x) for x in row) for row in self.gram)

    def to_record(self) -> dict[str, Any]:
        return {"rank": self.rank, "entries": [x for row in self.gram for x in row]}

    def __str__(self) -> str:
        return "[" + "; ".join(" ".join(str(x) for x in row) for row in self.gram) + "]"


# =============================================================================
# Operations
# =============================================================================


def determinant(lattice: GramLattice) -> int:
    """Determinant of the Gram matrix, the order of L^#/L."""
    return lattice.determinant


def dual(lattice: GramLattice) -> RationalGram:
    """Gram matrix of L^# on the dual basis (the inverse Gram matrix)."""
    inv = Matrix(lattice.gram).inv()
    return RationalGram(_from_sympy(inv))


def rescale(lattice: GramLattice | RationalGram, alpha: Fraction | int) -> RationalGram:
    """The scaled lattice ^alpha L."""
    alpha = Fraction(alpha)
    if alpha == 0:
        raise InvalidScaleError("cannot rescale a lattice by 0")
    return RationalGram(tuple(tuple(alpha * x for x in row) for row in lattice.gram))


def direct_sum(first: GramLattice, second: GramLattice) -> GramLattice:
    """Orthogonal sum with block-diagonal Gram matrix."""
    n, m = first.rank, second.rank
    rows = [list(r) + [0] * m for r in first.gram]
    rows += [[0] * n + list(r) for r in second.gram]
    return GramLattice.from_rows(rows)


def is_even(lattice: GramLattice) -> bool:
    return all(lattice.gram[i][i] % 2 == 0 for i in range(lattice.rank))


def content(lattice: GramLattice) -> int:
    """gcd of all Gram entries."""
    return reduce(math.gcd, (x for row in lattice.gram for x in row), 0)


def is_primitive(lattice: GramLattice) -> bool:
    """True when no prime divides every Gram entry."""
    return content(lattice) == 1


def primitive_part(lattice: GramLattice) -> GramLattice:
    """The primitive lattice L' with L = ^c L'."""
    c = content(lattice)
    if c == 1:
        return lattice
    return GramLattice(tuple(tuple(x // c for x in row) for row in lattice.gram))


def discriminant_exponent(lattice: GramLattice) -> int:
    """Exponent of the discriminant group L^#/L."""
    return reduce(math.lcm, (x.denominator for row in dual(lattice).gram for x in row), 1)


def transform(lattice: GramLattice, basis: Sequence[Sequence[int]]) -> GramLattice:
    """Gram matrix of the sublattice spanned by ``basis`` (rows, in coordinates)."""
    return RationalGram(gram_of_basis(lattice.gram, basis)).to_lattice()


# =============================================================================
# Lattices inside the rational span (Hermite normal form)
# =============================================================================


def lattice_sum(generators: Sequence[Sequence[Fraction]]) -> list[RatVector]:
    """Basis of the lattice generated by rational coordinate vectors.

    The generators must span the full space.
    """
    n = len(generators[0])
    denom = reduce(math.lcm, (Fraction(x).denominator for g in generators for x in g), 1)
    columns = [[int(Fraction(x) * denom) for x in g] for g in generators]
    m = Matrix([[columns[j][i] for j in range(len(columns))] for i in range(n)])
    h = hermite_normal_form(m)
    basis = [
        tuple(Fraction(int(h[i, j]), denom) for i in range(h.rows))
        for j in range(h.cols)
        if any(h[i, j] != 0 for i in range(h.rows))
    ]
    if len(basis) != n:
        raise LatticeError(f"generators span rank {len(basis)}, expected {n}")
    return basis


def dot_dual_basis(basis: Sequence[Sequence[Fraction]]) -> list[RatVector]:
    """Columns of (X^{-1})^T for the column matrix X, i.e. the dot-product dual."""
    n = len(basis)
    x = _to_sympy([[basis[j][i] for j in range(n)] for i in range(n)])
    inv_t = _from_sympy(x.inv().T)
    return [tuple(inv_t[i][j] for i in range(n)) for j in range(n)]


def lattice_intersection(
    first: Sequence[Sequence[Fraction]], second: Sequence[Sequence[Fraction]]
) -> list[RatVector]:
    """Basis of the intersection of two full-rank lattices in Q^n."""
    return dot_dual_basis(lattice_sum(dot_dual_basis(first) + dot_dual_basis(second)))


def standard_basis(n: int, scale: Fraction | int = 1) -> list[RatVector]:
    s = Fraction(scale)
    return [tuple(s if i == j else Fraction(0) for i in range(n)) for j in range(n)]


def dual_basis_coordinates(lattice: GramLattice, scale: Fraction | int = 1) -> list[RatVector]:
    """Coordinates of (scale times) the dual basis of L^#, as columns of G^{-1}."""
    inv = dual(lattice).gram
    s = Fraction(scale)
    n = lattice.rank
    return [tuple(s * inv[i][j] for i in range(n)) for j in range(n)]


def lattice_from_basis(lattice: GramLattice, basis: Sequence[Sequence[Fraction]]) -> GramLattice:
    """Integral lattice spanned by ``basis`` inside the space of ``lattice``."""
    return RationalGram(gram_of_basis(lattice.gram, basis)).to_lattice()


# =============================================================================
# Reduction
# =============================================================================


def gram_schmidt(gram: Sequence[Sequence[int]]) -> tuple[list[list[Fraction]], list[Fraction]]:
    """Gram-Schmidt coefficients and squared lengths computed from a Gram matrix."""
    n = len(gram)
    mu = [[Fraction(0)] * n for _ in range(n)]
    b = [Fraction(0)] * n
    for i in range(n):
        for j in range(i):
            s = Fraction(gram[i][j]) - sum((mu[j][k] * mu[i][k] * b[k] for k in range(j)),
                                           Fraction(0))
            mu[i][j] = s / b[j]
        b[i] = Fraction(gram[i][i]) - sum((mu[i][k] ** 2 * b[k] for k in range(i)), Fraction(0))
    return mu, b


def lll_reduce(
    lattice: GramLattice, delta: Fraction = Fraction(99, 100)
) -> tuple[GramLattice, list[list[int]]]:
    """LLL-reduce a Gram matrix exactly.

    Returns the reduced lattice and the unimodular transform whose rows are
    the new basis vectors in the old coordinates.
    """
    n = lattice.rank
    basis = [[int(i == j) for j in range(n)] for i in range(n)]

    def current() -> list[list[int]]:
        return [[inner(lattice.gram, u, v) for v in basis] for u in basis]

    gram = current()
    k = 1
    while k < n:
        mu, _ = gram_schmidt(gram)
        for j in range(k - 1, -1, -1):
            q = round(mu[k][j])
            if q:
                basis[k] = [basis[k][t] - q * basis[j][t] for t in range(n)]
                gram = current()
                mu, _ = gram_schmidt(gram)
        mu, b = gram_schmidt(gram)
        if b[k] >= (delta - mu[k][k - 1] ** 2) * b[k - 1]:
            k += 1
        else:
            basis[k], basis[k - 1] = basis[k - 1], basis[k]
            gram = current()
            k = max(k - 1, 1)
    order = sorted(range(n), key=lambda i: gram[i][i])
    basis = [basis[i] for i in order]
    return GramLattice.from_rows(current()), basis
