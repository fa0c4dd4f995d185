"""Isometry classes of a genus.

Representatives are built from a genus symbol, Kneser p-neighbours explore
the genus, and the exploration stops exactly when the classes found account
for the whole mass: sum 1/|O(M)| = mass(G).
"""

import itertools
import logging
import math
import os
import threading
from collections import deque
from collections.abc import Iterator, Sequence
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any

from sympy import Matrix, integer_nthroot, isprime, nextprime
from sympy.matrices.normalforms import hermite_normal_form

from reflective_genera.lattice import (
    GramLattice,
    dot_dual_basis,
    inner,
    lattice_from_basis,
    lattice_sum,
    lll_reduce,
    rescale,
    standard_basis,
)
from reflective_genera.local import (
    GenusSymbol,
    canonical_local,
    check_existence,
    genus_symbol,
    local_symbol,
    partial_dual,
    partial_dual_symbol,
    primitive_symbol,
    watson_symbol,
)
from reflective_genera.mass import mass
from reflective_genera.roots import is_reflective, short_vectors
from reflective_genera.utils.cache import automorphism_cache, forms_cache
from reflective_genera.utils.errors import BudgetExhaustedError, CertificateError

logger = logging.getLogger(__name__)

CLASS_BUDGET = int(os.environ.get("REFLECTIVE_GENERA_CLASS_BUDGET", "2000"))
NEIGHBOR_BUDGET = int(os.environ.get("REFLECTIVE_GENERA_NEIGHBOR_BUDGET", "200000"))
REPRESENTATIVE_BUDGET = int(os.environ.get("REFLECTIVE_GENERA_REPRESENTATIVE_BUDGET", "200000"))

# Hermite constants gamma_n^n for n <= 4
_HERMITE_POWER = {1: Fraction(1), 2: Fraction(4, 3), 3: Fraction(2), 4: Fraction(4)}


def reduced(lattice: GramLattice) -> GramLattice:
    return lll_reduce(lattice)[0]


# =============================================================================
# Isometries and automorphisms
# =============================================================================


def theta_prefix(lattice: GramLattice, bound: int) -> tuple[int, ...]:
    """Number of vector pairs +-v of each norm 1..bound."""
    counts = [0] * bound
    for _, norm in short_vectors(lattice, bound):
        counts[norm - 1] += 1
    return tuple(counts)


def _signed_vectors(lattice: GramLattice, bound: int) -> dict[int, list[tuple[int, ...]]]:
    by_norm: dict[int, list[tuple[int, ...]]] = {}
    for v, norm in short_vectors(lattice, bound):
        by_norm.setdefault(norm, []).extend([v, tuple(-c for c in v)])
    return by_norm


def _isometries(source: GramLattice, target: GramLattice) -> Iterator[list[tuple[int, ...]]]:
    """Images of the source basis in ``target`` that reproduce the source Gram matrix.

    Backtracking over vectors of the right norm, placing the most
    constrained basis vector first and checking inner products with the
    vectors already placed.
    """
    n = source.rank
    diag = [source.gram[i][i] for i in range(n)]
    by_norm = _signed_vectors(target, max(diag))
    candidates = [by_norm.get(d, []) for d in diag]
    order = sorted(range(n), key=lambda i: len(candidates[i]))
    images: dict[int, tuple[int, ...]] = {}

    def place(depth: int) -> Iterator[list[tuple[int, ...]]]:
        if depth == n:
            yield [images[i] for i in range(n)]
            return
        i = order[depth]
        for w in candidates[i]:
            if all(inner(target.gram, w, images[j]) == source.gram[i][j] for j in order[:depth]):
                images[i] = w
                yield from place(depth + 1)
        images.pop(i, None)

    yield from place(0)


def is_isometric(first: GramLattice, second: GramLattice) -> bool:
    """Whether two positive definite lattices are isometric."""
    if first.rank != second.rank or first.determinant != second.determinant:
        return False
    a, b = reduced(first), reduced(second)
    bound = max(max(a.gram[i][i] for i in range(a.rank)), max(b.gram[i][i] for i in range(b.rank)))
    if theta_prefix(a, bound) != theta_prefix(b, bound):
        return False
    return next(_isometries(a, b), None) is not None


def aut_order(lattice: GramLattice) -> int:
    """|O(L)|, counted by exhaustive backtracking."""
    a = reduced(lattice)

    def count() -> int:
        return sum(1 for _ in _isometries(a, a))

    result: int = automorphism_cache.get_or_set(repr(a.gram), count)
    return result


# =============================================================================
# Kneser neighbours
# =============================================================================


def _isotropic_lines(lattice: GramLattice, p: int) -> Iterator[tuple[int, ...]]:
    """Isotropic lines mod p, normalized with first nonzero coordinate 1."""
    n = lattice.rank
    for lead in range(n):
        for tail in itertools.product(range(p), repeat=n - lead - 1):
            v = (0,) * lead + (1,) + tail
            if lattice.norm(v) % p == 0:
                yield v


def _lift(lattice: GramLattice, v: tuple[int, ...], p: int) -> tuple[int, ...] | None:
    """A lift of v with norm divisible by p^2, or None if v lies in the radical mod p."""
    n = lattice.rank
    gv = [sum(lattice.gram[i][j] * v[j] for j in range(n)) for i in range(n)]
    j = next((k for k in range(n) if gv[k] % p), None)
    if j is None:
        return None
    q = lattice.norm(v)
    c = (-(q // p) * pow(2 * gv[j], -1, p)) % p
    lifted = list(v)
    lifted[j] += p * c
    return tuple(lifted)


def p_neighbor(lattice: GramLattice, v: Sequence[int], p: int) -> GramLattice:
    """The p-neighbour L_v + Z v/p for a lifted isotropic vector v."""
    n = lattice.rank
    gv = [Fraction(sum(lattice.gram[i][j] * v[j] for j in range(n)), p) for i in range(n)]
    orthogonal_part = dot_dual_basis(lattice_sum(standard_basis(n) + [tuple(gv)]))
    basis = lattice_sum(orthogonal_part + [tuple(Fraction(c, p) for c in v)])
    return reduced(lattice_from_basis(lattice, basis))


def p_neighbors(lattice: GramLattice, p: int) -> list[GramLattice]:
    """All p-neighbours of L for an odd prime p not dividing det L."""
    if p == 2 or not isprime(p):
        raise ValueError(f"neighbours need an odd prime, got {p}")
    if lattice.determinant % p == 0:
        raise ValueError(f"{p} divides the determinant {lattice.determinant}")
    result = []
    for v in _isotropic_lines(lattice, p):
        lifted = _lift(lattice, v, p)
        if lifted is not None:
            result.append(p_neighbor(lattice, lifted, p))
    logger.debug(f"{len(result)} {p}-neighbours of {lattice.to_text()!r}")
    return result


def neighbor_primes(det: int, count: int = 3) -> list[int]:
    """The smallest ``count`` primes not dividing 2 det."""
    primes = []
    p = 3
    while len(primes) < count:
        if det % p:
            primes.append(p)
        p = int(nextprime(p))
    return primes


# =============================================================================
# Representatives
# =============================================================================


def _in_genus(candidate: GramLattice, symbol: GenusSymbol) -> bool:
    """Compare local symbols prime by prime, stopping at the first mismatch."""
    if candidate.determinant != symbol.determinant:
        return False
    if symbol.is_even and any(candidate.gram[i][i] % 2 for i in range(candidate.rank)):
        return False
    for p in symbol.primes:
        if local_symbol(candidate, p) != canonical_local(symbol.local(p)):
            return False
    return True


def _max_block_det(rank: int, det: int) -> int:
    """Upper bound for the smallest determinant of a primitive corank-1 sublattice."""
    bound = _HERMITE_POWER[rank] * det ** (rank - 1)
    root, _ = integer_nthroot(math.floor(bound), rank)
    return int(root) + 1


def _coset_representatives(block: GramLattice) -> Iterator[tuple[int, ...]]:
    """Representatives of Z^m / A Z^m from the triangular Hermite form of A."""
    h = hermite_normal_form(Matrix(block.gram))
    ranges = [range(abs(int(h[i, i]))) for i in range(h.rows)]
    yield from itertools.product(*ranges)


def _binary_forms(det: int) -> Iterator[GramLattice]:
    """Reduced binary forms [[a, b], [b, c]] with 0 <= 2b <= a <= c."""
    a = 1
    while 3 * a * a <= 4 * det:
        for b in range(a // 2 + 1):
            if (det + b * b) % a == 0:
                c = (det + b * b) // a
                if c >= a:
                    yield GramLattice(((a, b), (b, c)))
        a += 1


def _extensions(block: GramLattice, det: int) -> Iterator[GramLattice]:
    """Lattices [[A, v], [v^T, w]] of determinant det, one per coset of v mod A."""
    k = block.determinant
    adj = Matrix(block.gram).adjugate()
    m = block.rank
    for v in _coset_representatives(block):
        q = int((Matrix([v]) * adj * Matrix(v))[0, 0])
        if (det + q) % k:
            continue
        w = (det + q) // k
        rows = [list(block.gram[i]) + [v[i]] for i in range(m)] + [list(v) + [w]]
        yield GramLattice.from_rows(rows)


def forms_of_determinant(rank: int, det: int) -> Iterator[GramLattice]:
    """Positive definite forms of the given rank and determinant, every class at least once."""
    if rank == 1:
        yield GramLattice(((det,),))
        return
    if rank == 2:
        yield from _binary_forms(det)
        return
    seen: set[tuple[tuple[int, ...], ...]] = set()
    for k in range(1, _max_block_det(rank, det) + 1):
        for block in _block_forms(rank - 1, k):
            for form in _extensions(block, det):
                key = reduced(form).gram
                if key not in seen:
                    seen.add(key)
                    yield form


def _block_forms(rank: int, det: int) -> tuple[GramLattice, ...]:
    result: tuple[GramLattice, ...] = forms_cache.get_or_set(
        f"{rank}:{det}", lambda: tuple(forms_of_determinant(rank, det))
    )
    return result


def _candidates(rank: int, det: int) -> Iterator[GramLattice]:
    """Forms of the given determinant, ordered by the determinant of their corank-1 block."""
    if rank <= 2:
        yield from forms_of_determinant(rank, det)
        return
    for k in range(1, _max_block_det(rank, det) + 1):
        for block in _block_forms(rank - 1, k):
            yield from _extensions(block, det)


def _search_representative(symbol: GenusSymbol, budget: int) -> GramLattice:
    """Block extension search; ``budget`` caps the number of candidates tested."""
    for tried, form in enumerate(_candidates(symbol.rank, symbol.determinant), start=1):
        if tried > budget:
            raise BudgetExhaustedError(f"no representative of {symbol} within {budget} candidates")
        if _in_genus(form, symbol):
            logger.debug(f"representative of {symbol} after {tried} candidates")
            return form
    raise BudgetExhaustedError(f"search space for {symbol} exhausted")


def _subspaces(n: int, p: int) -> Iterator[list[tuple[int, ...]]]:
    """Bases in reduced row echelon form of all subspaces of F_p^n."""
    for k in range(n + 1):
        for pivots in itertools.combinations(range(n), k):
            free = [(r, c) for r in range(k) for c in range(pivots[r] + 1, n) if c not in pivots]
            for values in itertools.product(range(p), repeat=len(free)):
                rows = [[0] * n for _ in range(k)]
                for r, c in enumerate(pivots):
                    rows[r][c] = 1
                for (r, c), x in zip(free, values, strict=True):
                    rows[r][c] = x
                yield [tuple(row) for row in rows]


def _subspace_count(n: int, p: int) -> int:
    """Number of subspaces of F_p^n, a sum of Gaussian binomials."""
    total = 0
    for k in range(n + 1):
        num = math.prod(p ** (n - i) - 1 for i in range(k))
        den = math.prod(p ** (i + 1) - 1 for i in range(k))
        total += num // den
    return total


def _watson_sublattice(symbol: GenusSymbol, p: int, parent: GramLattice) -> GramLattice | None:
    """A lattice K of genus ``symbol`` with pL' <= K <= L', where L' = E_p(K)."""
    n = parent.rank
    scaled = [tuple(Fraction(p * x) for x in e) for e in standard_basis(n)]
    for rows in _subspaces(n, p):
        basis = lattice_sum(scaled + [tuple(Fraction(x) for x in r) for r in rows])
        candidate = lattice_from_basis(parent, basis)
        if _in_genus(candidate, symbol):
            return reduced(candidate)
    return None


def _content(symbol: GenusSymbol) -> int:
    return math.prod(
        s.p ** min(c.scale_exp for c in s.constituents) for s in symbol.local_symbols
    )


def representative(symbol: GenusSymbol, budget: int | None = None) -> GramLattice:
    """A lattice whose genus symbol is ``symbol``.

    Non-primitive symbols are rescaled, non square free primes are undone by
    searching sublattices of a representative of the Watson image, primes
    where the scaled part dominates go through the partial dual, and the
    remaining strongly square free symbols are found by block extension.
    """
    check_existence(symbol)
    budget = REPRESENTATIVE_BUDGET if budget is None else budget
    c = _content(symbol)
    if c > 1:
        base = representative(primitive_symbol(symbol), budget)
        return rescale(base, c).to_lattice()
    for s in symbol.local_symbols:
        if not s.is_square_free():
            count = _subspace_count(symbol.rank, s.p)
            if count > budget:
                raise BudgetExhaustedError(
                    f"{count} subspaces of F_{s.p}^{symbol.rank} exceed the budget {budget} "
                    f"for the Watson pre-image of {symbol}"
                )
            parent = representative(watson_symbol(symbol, s.p), budget)
            found = _watson_sublattice(symbol, s.p, parent)
            if found is not None:
                return found
            logger.warning(f"no sublattice of {parent.to_text()!r} has genus {symbol}")
    for s in symbol.local_symbols:
        if s.is_square_free() and not s.is_strongly_square_free():
            dual_rep = representative(partial_dual_symbol(symbol, s.p), budget)
            return reduced(partial_dual(dual_rep, s.p))
    return reduced(_search_representative(symbol, budget))


# =============================================================================
# Class enumeration
# =============================================================================


@dataclass(frozen=True)
class LatticeClass:
    lattice: GramLattice
    aut_order: int
    reflective: bool

    def to_dict(self) -> dict[str, Any]:
        return {
            "gram": [list(row) for row in self.lattice.gram],
            "aut_order": self.aut_order,
            "reflective": self.reflective,
        }


@dataclass
class GenusClassSet:
    """Classes found in a genus; certified once they exhaust the mass."""

    genus: GenusSymbol
    mass: Fraction
    classes: list[LatticeClass] = field(default_factory=list)
    certified: bool = False

    @property
    def class_number(self) -> int:
        return len(self.classes)

    @property
    def mass_found(self) -> Fraction:
        return sum((Fraction(1, c.aut_order) for c in self.classes), Fraction(0))

    @property
    def all_reflective(self) -> bool:
        return all(c.reflective for c in self.classes)

    def to_dict(self) -> dict[str, Any]:
        return {
            "genus": str(self.genus),
            "rank": self.genus.rank,
            "determinant": self.genus.determinant,
            "mass": str(self.mass),
            "mass_found": str(self.mass_found),
            "certified": self.certified,
            "class_number": self.class_number,
            "classes": [c.to_dict() for c in self.classes],
        }


class ClassRegistry:
    """Classes found so far, bucketed by theta prefix; insertion is serialized."""

    def __init__(self, bound: int) -> None:
        self._bound = bound
        self._buckets: dict[tuple[int, ...], list[GramLattice]] = {}
        self._lock = threading.Lock()
        self.classes: list[LatticeClass] = []

    def _invariant(self, lattice: GramLattice) -> tuple[int, ...]:
        return theta_prefix(lattice, self._bound)

    def add(self, lattice: GramLattice) -> LatticeClass | None:
        """Register ``lattice`` unless an isometric class is known; returns the new class."""
        key = self._invariant(lattice)
        with self._lock:
            for known in self._buckets.get(key, []):
                if next(_isometries(lattice, known), None) is not None:
                    return None
            self._buckets.setdefault(key, []).append(lattice)
        entry = LatticeClass(lattice, aut_order(lattice), is_reflective(lattice))
        with self._lock:
            self.classes.append(entry)
        logger.debug(f"new class {lattice.to_text()!r} with |O| = {entry.aut_order}")
        return entry


def genus_classes(
    symbol: GenusSymbol,
    *,
    stop_when_nonreflective: bool = False,
    class_budget: int | None = None,
    neighbor_budget: int | None = None,
) -> GenusClassSet:
    """Enumerate the classes of a genus by neighbour exploration, certified by the mass.

    Exploration starts at the smallest prime not dividing 2 det and moves to
    the next one when the neighbour graph closes without reaching the mass.
    With ``stop_when_nonreflective`` the search ends at the first class
    without a full rank root system, leaving the set uncertified.
    """
    class_budget = CLASS_BUDGET if class_budget is None else class_budget
    neighbor_budget = NEIGHBOR_BUDGET if neighbor_budget is None else neighbor_budget
    target = mass(symbol)
    start = representative(symbol)
    bound = max(start.gram[i][i] for i in range(start.rank))
    registry = ClassRegistry(bound)
    result = GenusClassSet(genus=symbol, mass=target, classes=registry.classes)
    total = Fraction(0)
    generated = 0

    def visit(lattice: GramLattice) -> LatticeClass | None:
        nonlocal total
        entry = registry.add(lattice)
        if entry is None:
            return None
        total += Fraction(1, entry.aut_order)
        if total > target:
            raise CertificateError(f"classes of {symbol} exceed the mass {target}: {total}")
        if len(registry.classes) > class_budget:
            raise BudgetExhaustedError(f"more than {class_budget} classes in {symbol}")
        return entry

    first = visit(start)
    if stop_when_nonreflective and first is not None and not first.reflective:
        return result
    for p in neighbor_primes(symbol.determinant):
        queue = deque(entry.lattice for entry in registry.classes)
        while queue and total < target:
            current = queue.popleft()
            for neighbor in p_neighbors(current, p):
                generated += 1
                if generated > neighbor_budget:
                    raise BudgetExhaustedError(
                        f"{neighbor_budget} neighbours generated in {symbol} "
                        f"reaching mass {total} of {target}"
                    )
                entry = visit(neighbor)
                if entry is None:
                    continue
                if stop_when_nonreflective and not entry.reflective:
                    return result
                queue.append(neighbor)
                if total == target:
                    break
        if total == target:
            break
        logger.info(f"{p}-neighbour graph of {symbol} closed at mass {total} of {target}")
    result.certified = total == target
    if not result.certified:
        raise BudgetExhaustedError(f"neighbour exploration of {symbol} stalled at {total}")
    logger.debug(f"{symbol}: {result.class_number} classes, mass {target}")
    return result


def is_totally_reflective(symbol: GenusSymbol) -> bool:
    """Whether every class in the genus is reflective."""
    result = genus_classes(symbol, stop_when_nonreflective=True)
    return result.certified and result.all_reflective


def reflective_mass(class_set: GenusClassSet) -> Fraction:
    """Sum of 1/|O(M)| over the reflective classes."""
    return sum(
        (Fraction(1, c.aut_order) for c in class_set.classes if c.reflective), Fraction(0)
    )


def lattice_classes(lattice: GramLattice) -> GenusClassSet:
    return genus_classes(genus_symbol(lattice))
