"""Roots, root systems and reflectivity.

A primitive vector v of L is a root when the reflection s_v maps L onto
itself, i.e. when 2 b(x, v) / b(v, v) is an integer for every x in L. The
condition says 2v/b(v,v) lies in L^#, so root norms divide twice the exponent
of the discriminant group and each norm can be searched inside the
sublattice L cap (m/2) L^#.
"""

import logging
import math
from collections import Counter
from collections.abc import Iterable, Iterator, Sequence
from dataclasses import dataclass
from fractions import Fraction
from functools import reduce
from typing import Any

from sympy import Matrix, divisors

from reflective_genera.lattice import (
    GramLattice,
    discriminant_exponent,
    dual_basis_coordinates,
    gram_schmidt,
    inner,
    lattice_from_basis,
    lattice_intersection,
    lll_reduce,
    standard_basis,
)
from reflective_genera.utils.errors import RootClassificationError, UnknownWeylClassError

logger = logging.getLogger(__name__)


# =============================================================================
# Short vectors
# =============================================================================


def _enumerate(
    mu: list[list[Fraction]], b: list[Fraction], bound: Fraction
) -> Iterator[tuple[int, ...]]:
    """All x with sum_i b_i (x_i + sum_{j>i} mu_ji x_j)^2 <= bound, including 0."""
    n = len(b)
    x = [0] * n

    def level(i: int, remaining: Fraction) -> Iterator[tuple[int, ...]]:
        if i < 0:
            yield tuple(x)
            return
        center = -sum((mu[j][i] * x[j] for j in range(i + 1, n)), Fraction(0))
        radius_sq = remaining / b[i]
        radius = math.isqrt(math.floor(radius_sq)) + 1
        lo = math.floor(center - radius)
        hi = math.ceil(center + radius)
        for value in range(lo, hi + 1):
            offset = (value - center) ** 2
            if offset > radius_sq:
                continue
            x[i] = value
            yield from level(i - 1, remaining - b[i] * offset)
        x[i] = 0

    yield from level(n - 1, Fraction(bound))


def _sign_normalized(v: Sequence[int]) -> tuple[int, ...]:
    first = next(c for c in v if c)
    return tuple(v) if first > 0 else tuple(-c for c in v)


def short_vectors(lattice: GramLattice, bound: int) -> list[tuple[tuple[int, ...], int]]:
    """Nonzero vectors of norm at most ``bound``, one of each pair +-v.

    Vectors are coordinates in the basis of ``lattice``; the first nonzero
    coordinate is positive. Sorted by norm, then coordinates.
    """
    if bound <= 0:
        raise ValueError(f"short vector bound must be positive, got {bound}")
    reduced, transform_rows = lll_reduce(lattice)
    mu, b = gram_schmidt(reduced.gram)
    n = lattice.rank
    found: dict[tuple[int, ...], int] = {}
    for x in _enumerate(mu, b, Fraction(bound)):
        if not any(x):
            continue
        v = tuple(sum(x[i] * transform_rows[i][k] for i in range(n)) for k in range(n))
        norm = lattice.norm(v)
        if norm <= bound:
            found[_sign_normalized(v)] = norm
    return sorted(found.items(), key=lambda item: (item[1], item[0]))


# =============================================================================
# Roots
# =============================================================================


@dataclass(frozen=True, order=True)
class Root:
    norm: int
    coords: tuple[int, ...]

    def negated(self) -> "Root":
        return Root(self.norm, tuple(-c for c in self.coords))


def is_root(lattice: GramLattice, v: Sequence[int]) -> bool:
    """Primitive and 2 b(e_i, v) divisible by b(v, v) for every basis vector."""
    if not any(v) or reduce(math.gcd, v, 0) != 1:
        return False
    norm = lattice.norm(v)
    n = lattice.rank
    return all(
        2 * sum(lattice.gram[i][j] * v[j] for j in range(n)) % norm == 0 for i in range(n)
    )


def root_norm_candidates(lattice: GramLattice) -> list[int]:
    """Possible root norms: the divisors of 2 * exponent(L^#/L)."""
    return [int(m) for m in divisors(2 * discriminant_exponent(lattice))]


def roots_of_norm(lattice: GramLattice, m: int) -> list[Root]:
    """Roots of norm m, both signs, found in L cap (m/2) L^#."""
    n = lattice.rank
    basis = lattice_intersection(
        standard_basis(n), dual_basis_coordinates(lattice, Fraction(m, 2))
    )
    sub = lattice_from_basis(lattice, basis)
    result = []
    for x, norm in short_vectors(sub, m):
        if norm != m:
            continue
        coords = tuple(sum(x[j] * basis[j][k] for j in range(n)) for k in range(n))
        if any(c.denominator != 1 for c in coords):
            raise RootClassificationError(f"non-integral root candidate {coords}")
        v = tuple(int(c) for c in coords)
        if reduce(math.gcd, v, 0) != 1:
            continue
        root = Root(m, v)
        result.extend([root, root.negated()])
    return result


def root_set(lattice: GramLattice) -> list[Root]:
    """All roots of L."""
    roots: list[Root] = []
    for m in root_norm_candidates(lattice):
        roots.extend(roots_of_norm(lattice, m))
    return sorted(roots)


def span_rank(vectors: Iterable[Sequence[int]]) -> int:
    rows = [list(v) for v in vectors]
    if not rows:
        return 0
    return int(Matrix(rows).rank())


def is_reflective(lattice: GramLattice) -> bool:
    """Whether the roots of L span a sublattice of full rank."""
    found: list[tuple[int, ...]] = []
    for m in root_norm_candidates(lattice):
        found.extend(r.coords for r in roots_of_norm(lattice, m))
        if span_rank(found) == lattice.rank:
            return True
    return False


# =============================================================================
# Root system classification
# =============================================================================


@dataclass(frozen=True)
class RootComponent:
    """Irreducible component ^scale X_rank with its number of roots."""

    kind: str
    rank: int
    scale: Fraction
    size: int

    @property
    def label(self) -> str:
        name = self.kind if self.kind[0] in "EFG" else f"{self.kind}{self.rank}"
        return f"{name}^({self.scale})"

    def to_dict(self) -> dict[str, Any]:
        return {"type": self.kind, "rank": self.rank, "scale": str(self.scale), "roots": self.size}


@dataclass(frozen=True)
class RootSystemReport:
    components: tuple[RootComponent, ...]
    total_roots: int
    span_rank: int
    dimension: int
    # (norm, number of roots of that norm), norms increasing
    norm_counts: tuple[tuple[int, int], ...] = ()

    @property
    def reflective(self) -> bool:
        return self.span_rank == self.dimension

    @property
    def norm_two_roots(self) -> int:
        """Number of vectors of norm 2, the roots in the classical sense."""
        return dict(self.norm_counts).get(2, 0)

    def describe(self) -> str:
        parts = " + ".join(c.label for c in self.components) or "empty"
        flag = "true" if self.reflective else "false"
        return (
            f"{parts}, span {self.span_rank}/{self.dimension}, reflective={flag}, "
            f"norm 2 roots {self.norm_two_roots}"
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "components": [c.to_dict() for c in self.components],
            "total_roots": self.total_roots,
            "roots_by_norm": {str(m): k for m, k in self.norm_counts},
            "norm_two_roots": self.norm_two_roots,
            "span_rank": self.span_rank,
            "dimension": self.dimension,
            "reflective": self.reflective,
            "summary": self.describe(),
        }


_EXCEPTIONAL_SIZES = {72: ("E6", 6), 126: ("E7", 7), 240: ("E8", 8)}


def _components(lattice: GramLattice, roots: Sequence[Root]) -> list[list[Root]]:
    """Connected components of the non-orthogonality graph."""
    remaining = set(range(len(roots)))
    components = []
    while remaining:
        start = remaining.pop()
        stack = [start]
        members = [start]
        while stack:
            i = stack.pop()
            linked = [j for j in remaining if inner(lattice.gram, roots[i].coords, roots[j].coords)]
            for j in linked:
                remaining.discard(j)
                stack.append(j)
                members.append(j)
        components.append([roots[i] for i in sorted(members)])
    return components


def _classify_component(roots: Sequence[Root]) -> RootComponent:
    size = len(roots)
    rank = span_rank(r.coords for r in roots)
    norms = sorted({r.norm for r in roots})
    if len(norms) == 1:
        scale = Fraction(norms[0], 2)
        if size == rank * (rank + 1):
            return RootComponent("A", rank, scale, size)
        if rank >= 4 and size == 2 * rank * (rank - 1):
            return RootComponent("D", rank, scale, size)
        if size in _EXCEPTIONAL_SIZES and _EXCEPTIONAL_SIZES[size][1] == rank:
            kind, _ = _EXCEPTIONAL_SIZES[size]
            return RootComponent(kind, rank, scale, size)
    elif len(norms) == 2:
        short, long = norms
        scale = Fraction(long, 2)
        n_short = sum(1 for r in roots if r.norm == short)
        n_long = size - n_short
        if long == 3 * short and size == 12 and rank == 2:
            return RootComponent("G2", 2, scale, size)
        if long == 2 * short:
            if size == 48 and rank == 4 and n_short == n_long:
                return RootComponent("F4", 4, scale, size)
            if size == 2 * rank * rank:
                if rank == 2 or n_short == 2 * rank:
                    return RootComponent("B", rank, scale, size)
                if n_long == 2 * rank:
                    return RootComponent("C", rank, scale, size)
    raise RootClassificationError(
        f"component with {size} roots of norms {norms} in rank {rank} matches no type"
    )


def classify_root_system(roots: Sequence[Root], lattice: GramLattice) -> RootSystemReport:
    """Split R(L) into scaled irreducible components."""
    components = [_classify_component(c) for c in _components(lattice, roots)]
    components.sort(key=lambda c: (c.kind, c.rank, c.scale))
    return RootSystemReport(
        components=tuple(components),
        total_roots=len(roots),
        norm_counts=tuple(sorted(Counter(r.norm for r in roots).items())),
        span_rank=span_rank(r.coords for r in roots),
        dimension=lattice.rank,
    )


def root_system(lattice: GramLattice) -> RootSystemReport:
    return classify_root_system(root_set(lattice), lattice)


# =============================================================================
# Weyl groups
# =============================================================================


def component_weyl_order(component: RootComponent) -> int:
    n = component.rank
    match component.kind:
        case "A":
            return math.factorial(n + 1)
        case "B" | "C":
            return 2**n * math.factorial(n)
        case "D":
            return 2 ** (n - 1) * math.factorial(n)
        case "E6":
            return 51840
        case "E7":
            return 2903040
        case "E8":
            return 696729600
        case "F4":
            return 1152
        case "G2":
            return 12
    raise RootClassificationError(f"unknown component type {component.kind}")


def weyl_order(report: RootSystemReport) -> int:
    """|W(R)|, the product of the component Weyl group orders."""
    return math.prod(component_weyl_order(c) for c in report.components)


class WeylOrderTable:
    """|O(L)| for indecomposable reflective lattices by combinatorial class.

    Classes are opaque labels (a), (b), ... of the indecomposable reflective
    lattices in dimensions 2, 3 and 4; the order does not depend on the glue
    or the scaling.
    """

    ORDERS: dict[int, dict[str, int]] = {
        2: {"a": 4, "b": 12, "c": 4, "d": 8},
        3: {"a": 8, "b": 8, "c": 16, "d": 48, "e": 48},
        4: {
            "a": 16, "b": 16, "c": 16,
            "d": 32, "e": 32,
            "f": 96, "g": 96, "i": 96,
            "h": 72,
            "j": 240, "k": 240,
            "l": 1152,
        },
    }

    @classmethod
    def lookup(cls, dim: int, label: str) -> int:
        key = label.strip("() ").lower()
        try:
            return cls.ORDERS[dim][key]
        except KeyError as e:
            raise UnknownWeylClassError(
                f"no order recorded for class ({key}) in dimension {dim}"
            ) from e
