"""Analytic bounds that prune the search for totally-reflective genera.

For a strongly square free genus of determinant d, M(d) bounds the mass from
below while Mref(d) and Nref(d) bound the mass of its reflective classes from
above. A totally-reflective genus has both masses equal, so it can only exist
when the upper bound reaches the lower one. All three depend on the shape of d
alone, which turns the bounds into limits on the number and size of the prime
factors of d.

Values involving square roots, logarithms or pi are enclosed in intervals
(mpmath interval context, 160 bits); a shape is discarded only when the
upper end of its ratio lies below 1. Nref is rational, and comparing it
with M reduces to an exact comparison of squares. The prime limits and the
enumeration test (1 + TABLE_MARGIN) Nref against M.
"""

import functools
import itertools
import logging
from collections.abc import Iterable, Iterator, Sequence
from dataclasses import dataclass
from fractions import Fraction
from typing import Any

from mpmath.ctx_iv import MPIntervalContext
from sympy import factorint, nextprime, prime

from reflective_genera.local import DetShape, GenusSymbol, is_strongly_square_free
from reflective_genera.mass import standard_mass_floor
from reflective_genera.roots import WeylOrderTable
from reflective_genera.utils.cache import bounds_cache, memoized
from reflective_genera.utils.errors import BoundWitnessError

logger = logging.getLogger(__name__)

_IV = MPIntervalContext()
_IV.prec = 160

SUPPORTED_DIMS = (3, 4)

PUBLISHED_TABLES: dict[int, dict[str, tuple[int, ...]]] = {
    3: {
        "squared": (),
        "simple": (89, 257, 733, 1063, 1033, 607, 293, 113, 37),
    },
    4: {
        "squared": (191, 661, 1601, 2069, 1831, 997, 449, 157, 47),
        "simple": (11287, 6427, 3613, 1597, 653, 229, 67, 19),
    },
}

# Published limits: s <= 9 in dimension 3; r <= 9 and s <= 8 - r in dimension 4.
PUBLISHED_COUNT_LIMITS = {3: 9, 4: 9}


def published_max_s(dim: int) -> dict[int, int]:
    """Largest s per r allowed by the published count limits; r = 9 keeps s = 0."""
    if dim == 3:
        return {0: PUBLISHED_COUNT_LIMITS[3]}
    return {r: max(8 - r, 0) for r in range(PUBLISHED_COUNT_LIMITS[4] + 1)}


# Relative slack on Nref for every admissibility test that feeds the prime
# limits or the enumeration. With it the dimension 3 table comes out as published.
TABLE_MARGIN = Fraction(1, 100)

# 2-adic floor of the local mass factors of a strongly square free lattice.
_DYADIC_FLOOR = {3: Fraction(1, 8), 4: Fraction(1, 24)}

# Number of scalings a of each combinatorial class of indecomposable reflective
# lattices; a class contributes a^Omega / |O| to the reflective mass bounds.
_CLASS_SCALINGS: dict[int, dict[str, int]] = {
    2: {"a": 2, "b": 1, "c": 2, "d": 1},
    3: {"a": 3, "b": 3, "c": 2, "d": 1, "e": 1},
    4: {
        "a": 4, "b": 4, "c": 4,
        "d": 3, "e": 3,
        "f": 2, "g": 2, "i": 2, "h": 2,
        "j": 1, "k": 1, "l": 1,
    },
}

WATSON_GROWTH = {3: 81, 4: 5103}

_PRIME_SEARCH_LIMIT = 10**6


def _require_dim(dim: int) -> None:
    if dim not in SUPPORTED_DIMS:
        raise ValueError(f"bounds are only available in dimensions 3 and 4, got {dim}")


def _interval(value: Fraction | int) -> Any:
    value = Fraction(value)
    return _IV.mpf(value.numerator) / value.denominator


def first_primes(count: int) -> list[int]:
    return [int(prime(i)) for i in range(1, count + 1)]


# =============================================================================
# Enclosures
# =============================================================================


@dataclass(frozen=True)
class BoundValue:
    """Enclosure of a real number; ``exact`` is set when the value is rational."""

    interval: Any
    exact: Fraction | None = None

    @classmethod
    def from_fraction(cls, value: Fraction | int) -> "BoundValue":
        return cls(_interval(value), Fraction(value))

    @property
    def lower(self) -> Any:
        return self.interval.a

    @property
    def upper(self) -> Any:
        return self.interval.b

    def certainly_below(self, bound: Fraction | int) -> bool:
        return (self.interval.b < _interval(bound)) is True

    def certainly_at_least(self, bound: Fraction | int) -> bool:
        return (self.interval.a >= _interval(bound)) is True

    def certainly_above(self, bound: Fraction | int) -> bool:
        return (self.interval.a > _interval(bound)) is True

    def __truediv__(self, other: "BoundValue") -> "BoundValue":
        exact = None
        if self.exact is not None and other.exact is not None:
            exact = self.exact / other.exact
        return BoundValue(self.interval / other.interval, exact)

    def __float__(self) -> float:
        return float(self.interval.mid)

    def to_dict(self) -> dict[str, Any]:
        result: dict[str, Any] = {
            "lower": float(self.interval.a),
            "upper": float(self.interval.b),
        }
        if self.exact is not None:
            result["exact"] = str(self.exact)
        return result


# =============================================================================
# M, Mref and Nref
# =============================================================================


def _omega_counts(exponents: Iterable[int]) -> list[int]:
    """counts[k] = number of divisors x of d with Omega(x) = k."""
    counts = [1]
    for e in exponents:
        spread = [0] * (len(counts) + e)
        for k, c in enumerate(counts):
            for j in range(e + 1):
                spread[k + j] += c
        counts = spread
    return counts


@functools.cache
def class_sum(dim: int, omega: int) -> Fraction:
    """Sum of a^omega / |O| over the indecomposable reflective classes of dimension dim.

    Bounds the mass of the indecomposable reflective lattices of determinant d
    with Omega(d) = omega; 2 * 2^k/4 + 5/24 in dimension 2.
    """
    return sum(
        (Fraction(a**omega, WeylOrderTable.lookup(dim, label))
         for label, a in _CLASS_SCALINGS[dim].items()),
        Fraction(0),
    )


def _two_dim_count(k: int) -> Fraction:
    return class_sum(2, k)


def _four_dim_head(omega: int) -> Fraction:
    return class_sum(4, omega)


@functools.cache
def _m_base(dim: int) -> Fraction:
    """M(1): the standard mass floor times the 2-adic floor, 1/48 and 1/2160."""
    return standard_mass_floor(dim) * _DYADIC_FLOOR[dim]


def nref_value(exponents: Sequence[int], dim: int, extended: bool = False) -> Fraction:
    """Nref for a determinant with the given prime exponents.

    The extended form adds the four- and three-dimensional terms needed once
    the genus is no longer strongly square free.
    """
    _require_dim(dim)
    counts = _omega_counts(exponents)
    omega = len(counts) - 1
    if dim == 3:
        total = sum((c * Fraction(1, 2) * _two_dim_count(k) for k, c in enumerate(counts)),
                    Fraction(0))
    else:
        total = _four_dim_head(omega) + sum(
            (c * Fraction(1, 4) * _two_dim_count(k) * _two_dim_count(omega - k)
             for k, c in enumerate(counts)),
            Fraction(0),
        )
    if extended:
        if dim == 3:
            total += _four_dim_head(omega)
        total += sum((c * class_sum(3, k) for k, c in enumerate(counts)), Fraction(0))
    return total


def _formal_m_parts(
    squared: Sequence[int], simple: Sequence[int], dim: int
) -> tuple[Fraction, int]:
    """M as a formal product, defined even when a prime sits in both roles."""
    rational = _m_base(dim)
    if dim == 3:
        for q in simple:
            if q != 2:
                rational *= Fraction(q - 1, 2)
        return rational, 1
    radicand = 1
    for p in squared:
        if p != 2:
            rational *= Fraction(p * p * (p - 1), 2 * (p + 1))
    for q in simple:
        if q != 2:
            rational *= Fraction(q, 2)
            radicand *= q
    return rational, radicand


def _m_parts(shape: DetShape, dim: int) -> tuple[Fraction, int]:
    """M(d) = R * sqrt(S); the factor of p = 2 is 1."""
    _require_dim(dim)
    if not shape.valid_for(dim):
        raise ValueError(f"shape {shape} has squared factors, not allowed in dimension {dim}")
    return _formal_m_parts(shape.squared, shape.simple, dim)


def m_lower(shape: DetShape, dim: int) -> BoundValue:
    """Lower bound M(d) for the mass of a strongly square free genus."""
    rational, radicand = _m_parts(shape, dim)
    if radicand == 1:
        return BoundValue.from_fraction(rational)
    return BoundValue(_interval(rational) * _IV.sqrt(radicand))


def nref_upper(shape: DetShape, dim: int, extended: bool = False) -> BoundValue:
    """Upper bound Nref(d) for the reflective mass, read off the root system classification."""
    if not shape.valid_for(dim):
        raise ValueError(f"shape {shape} has squared factors, not allowed in dimension {dim}")
    return BoundValue.from_fraction(nref_value(list(shape.exponents.values()), dim, extended))


def nref_admits(
    shape: DetShape, dim: int, extended: bool = False, margin: Fraction = Fraction(0)
) -> bool:
    """Whether (1 + margin) Nref(d) >= M(d), decided exactly."""
    rational, radicand = _m_parts(shape, dim)
    nref = nref_value(list(shape.exponents.values()), dim, extended)
    quotient = (1 + margin) * nref / rational
    return quotient * quotient >= radicand


def within_margin(shape: DetShape, dim: int) -> bool:
    """The admissibility test behind the prime limits and the enumeration."""
    return nref_admits(shape, dim, margin=TABLE_MARGIN)


def mref_upper(shape: DetShape, dim: int) -> BoundValue:
    """Upper bound Mref(d) for the reflective mass, read off the mass formula.

    In dimension 4 the per-prime factors of the divisor sum are taken for every
    p | d, using max(1, factor) when p does not divide x, so the value dominates
    both readings of the product range.
    """
    _require_dim(dim)
    if not shape.valid_for(dim):
        raise ValueError(f"shape {shape} has squared factors, not allowed in dimension {dim}")
    two_over_pi = _IV.mpf(2) / _IV.pi
    one = _IV.mpf(1)
    logs = {p: _IV.log(p) for p in shape.exponents}
    half_roots = {q: _IV.sqrt(q) / 2 for q in shape.simple}
    if dim == 3:
        total = _IV.mpf(0)
        for k in range(shape.s + 1):
            for subset in itertools.combinations(shape.simple, k):
                factor, log_x = one, _IV.mpf(0)
                for q in subset:
                    factor *= half_roots[q]
                    log_x += logs[q]
                total += factor * (1 + log_x / 2)
        return BoundValue(total * two_over_pi)

    # (factor, ln x, omega(x)) over all divisors x of d
    terms: list[tuple[Any, Any, int]] = [(one, _IV.mpf(0), 0)]
    for p in shape.squared:
        full = _IV.mpf(2 * p) / (2 * p - 1)
        terms = [
            (factor * full, log_x + e * logs[p], omega + (1 if e else 0))
            for factor, log_x, omega in terms
            for e in (0, 1, 2)
        ]
    for q in shape.simple:
        full = half_roots[q]
        capped = full if q >= 5 else one
        terms = [
            (factor * (full if e else capped), log_x + e * logs[q], omega + e)
            for factor, log_x, omega in terms
            for e in (0, 1)
        ]
    total = _IV.mpf(0)
    for factor, log_x, omega in terms:
        total += 2 ** (omega + 1) * factor * (1 + log_x / 2)
    head = _interval(_four_dim_head(shape.big_omega))
    return BoundValue(head + total * two_over_pi / 4)


def nref_ratio(shape: DetShape, dim: int, extended: bool = False) -> BoundValue:
    return nref_upper(shape, dim, extended) / m_lower(shape, dim)


def mref_ratio(shape: DetShape, dim: int) -> BoundValue:
    return mref_upper(shape, dim) / m_lower(shape, dim)


def symbol_nref(symbol: GenusSymbol) -> Fraction:
    """Nref of a genus; the extended form unless it is strongly square free."""
    exponents = [int(e) for e in factorint(symbol.determinant).values()]
    return nref_value(exponents, symbol.rank, extended=not is_strongly_square_free(symbol))


def ratio_report(shape: DetShape, dim: int) -> dict[str, Any]:
    """All bounds for one shape, as printed by ``bounds ratio``."""
    report: dict[str, Any] = {
        "shape": str(shape),
        "determinant": shape.determinant,
        "dim": dim,
        "M": m_lower(shape, dim).to_dict(),
        "Nref": nref_upper(shape, dim).to_dict(),
        "Nref/M": nref_ratio(shape, dim).to_dict(),
        "admissible": nref_admits(shape, dim),
        "within_margin": within_margin(shape, dim),
    }
    if shape.big_omega <= 24:
        report["Mref"] = mref_upper(shape, dim).to_dict()
        report["Mref/M"] = mref_ratio(shape, dim).to_dict()
    return report


# =============================================================================
# Limits on the number of prime factors
# =============================================================================


@dataclass(frozen=True)
class WitnessCheck:
    """A first-primes configuration whose bound ratio must lie below 1."""

    route: str
    shape: DetShape
    ratio: BoundValue

    @property
    def holds(self) -> bool:
        return self.ratio.certainly_below(1)

    def to_dict(self) -> dict[str, Any]:
        return {
            "route": self.route,
            "shape": str(self.shape),
            "ratio": self.ratio.to_dict(),
            "holds": self.holds,
        }


@dataclass(frozen=True)
class CountBounds:
    """Largest r (squared primes) and, per r, largest s (simple primes) of an admissible shape.

    ``max_s`` is the limit in force: the computed one capped by the published one.
    """

    dim: int
    max_r: int
    max_s: dict[int, int]
    computed_max_s: dict[int, int]
    witnesses: tuple[WitnessCheck, ...]

    @property
    def capped(self) -> dict[int, int]:
        """Computed s for every r where the published limit is lower."""
        return {r: s for r, s in self.computed_max_s.items() if s > self.max_s.get(r, -1)}

    def to_dict(self) -> dict[str, Any]:
        return {
            "dim": self.dim,
            "max_r": self.max_r,
            "max_s": {str(r): s for r, s in sorted(self.max_s.items())},
            "computed_max_s": {str(r): s for r, s in sorted(self.computed_max_s.items())},
            "published_max_s": {str(r): s for r, s in sorted(published_max_s(self.dim).items())},
            "witnesses": [w.to_dict() for w in self.witnesses],
        }


def _witnesses(dim: int) -> list[WitnessCheck]:
    if dim == 3:
        nref_shape = DetShape(simple=tuple(first_primes(10)))
        mref_shape = DetShape(simple=tuple(first_primes(11)))
        return [
            WitnessCheck("nref", nref_shape, nref_ratio(nref_shape, 3)),
            WitnessCheck("mref", mref_shape, mref_ratio(mref_shape, 3)),
        ]
    squared_shape = DetShape(squared=tuple(first_primes(10)))
    return [WitnessCheck("mref", squared_shape, mref_ratio(squared_shape, 4))]


def _best_split_admits(r: int, s: int, dim: int) -> bool:
    """Whether some split of the first r + s primes into r squared and s simple is admissible.

    Every shape with r squared and s simple primes has a ratio at most that
    of the corresponding split, since the ratio decreases in each prime.
    """
    primes = first_primes(r + s)
    for squared in itertools.combinations(primes, r):
        simple = tuple(p for p in primes if p not in squared)
        if within_margin(DetShape(squared, simple), dim):
            return True
    return False


def _max_simple(r: int, dim: int) -> int:
    """Largest admissible s for r squared primes, -1 if none.

    Once the next prime is at least 7, appending a prime multiplies M by
    more than it can multiply Nref, so the scan stops at the first failure
    past four primes.
    """
    best = -1
    s = 0
    while s < 64:
        if _best_split_admits(r, s, dim):
            best = s
        elif r + s >= 4:
            break
        s += 1
    return best


@memoized(bounds_cache, key_prefix="counts")
def prime_count_bounds(dim: int) -> CountBounds:
    """Limits on r and s: the Nref scan over the first primes, capped by the published limits."""
    _require_dim(dim)
    witnesses = _witnesses(dim)
    for w in witnesses:
        if not w.holds:
            raise BoundWitnessError(
                f"{w.route} ratio at {w.shape} is not below 1: upper end {float(w.ratio.upper)}"
            )
    computed: dict[int, int] = {}
    if dim == 3:
        computed[0] = _max_simple(0, 3)
    else:
        r = 0
        while True:
            limit = _max_simple(r, 4)
            if limit < 0 and r >= 4:
                break
            if limit >= 0:
                computed[r] = limit
            r += 1
    published = published_max_s(dim)
    max_s = {r: min(s, published[r]) for r, s in computed.items() if r in published}
    if not max_s:
        raise BoundWitnessError(f"dimension {dim}: no admissible shape within the published limits")
    bounds = CountBounds(dim, max(max_s), max_s, computed, tuple(witnesses))
    for r, s in sorted(bounds.capped.items()):
        cap = "r excluded" if r not in published else f"s <= {published[r]}"
        logger.warning(f"Dimension {dim}, r={r}: Nref admits s={s}, published limit {cap} applied")
    logger.info(f"Count bounds in dimension {dim}: max_r={bounds.max_r}, max_s={max_s}")
    return bounds


# =============================================================================
# Limits on the prime factors themselves
# =============================================================================


@dataclass(frozen=True)
class PrimeTables:
    """Per-position limits: squared[i] bounds p_(i+1), simple[j] bounds q_(j+1).

    ``squared`` and ``simple`` hold the published limits, the ``computed_``
    tuples the limits re-derived from the Nref test. ``limit`` is the larger
    of the two at a position.
    """

    dim: int
    squared: tuple[int, ...]
    simple: tuple[int, ...]
    computed_squared: tuple[int, ...]
    computed_simple: tuple[int, ...]

    def _pair(self, role: str) -> tuple[tuple[int, ...], tuple[int, ...]]:
        if role == "squared":
            return self.squared, self.computed_squared
        return self.simple, self.computed_simple

    def limit(self, role: str, position: int) -> int | None:
        values = [t[position - 1] for t in self._pair(role) if position <= len(t)]
        return max(values) if values else None

    @property
    def matches_published(self) -> bool:
        return self.computed_squared == self.squared and self.computed_simple == self.simple

    def comparison(self) -> list[dict[str, Any]]:
        rows = []
        for role in ("squared", "simple"):
            published, computed = self._pair(role)
            for i in range(max(len(published), len(computed))):
                rows.append({
                    "role": role,
                    "position": i + 1,
                    "computed": computed[i] if i < len(computed) else None,
                    "published": published[i] if i < len(published) else None,
                    "limit": self.limit(role, i + 1),
                })
        return rows

    def to_dict(self) -> dict[str, Any]:
        return {
            "dim": self.dim,
            "squared": list(self.squared),
            "simple": list(self.simple),
            "computed": {"squared": list(self.computed_squared),
                         "simple": list(self.computed_simple)},
            "margin": str(TABLE_MARGIN),
            "matches_published": self.matches_published,
        }


def _fill(
    count: int, avoid: set[int], *, below: int | None = None, above: int = 1
) -> list[int] | None:
    """The ``count`` smallest primes > above (and < below) outside ``avoid``."""
    result: list[int] = []
    p = above
    while len(result) < count:
        p = int(nextprime(p))
        if below is not None and p >= below:
            return None
        if p not in avoid:
            result.append(p)
    return result


def _configurations(q: int, role: str, position: int, r: int, s: int) -> Iterator[DetShape]:
    """Shapes with q at the given position and all other slots on the smallest primes.

    Two fillings are tried: the target's own smaller slots first, or the other
    role's slots first.
    """
    own_total, other_total = (r, s) if role == "squared" else (s, r)
    for own_first in (True, False):
        used = {q}
        below: list[int] | None
        if own_first:
            below = _fill(position - 1, used, below=q)
            if below is None:
                continue
            used |= set(below)
            other = _fill(other_total, used) or []
        else:
            other = _fill(other_total, used) or []
            used |= set(other)
            below = _fill(position - 1, used, below=q)
            if below is None:
                continue
        used |= set(below) | set(other)
        above = _fill(own_total - position, used, above=q) or []
        own = tuple(below + [q] + above)
        yield DetShape(own, tuple(other)) if role == "squared" else DetShape(tuple(other), own)


def _role_configurations(
    role: str, position: int, counts: CountBounds
) -> Iterator[tuple[int, int]]:
    for r, max_s in sorted(counts.max_s.items()):
        if role == "squared":
            if r >= position:
                yield from ((r, s) for s in range(max_s + 1))
        else:
            yield from ((r, s) for s in range(position, max_s + 1))


def _position_limit(dim: int, role: str, position: int, counts: CountBounds) -> int:
    """Largest prime admissible at this position over all (r, s) within the count limits."""
    best = 0
    for r, s in _role_configurations(role, position, counts):
        settled_after = int(prime(r + s))
        q = 1
        while q < _PRIME_SEARCH_LIMIT:
            q = int(nextprime(q))
            admissible = any(within_margin(shape, dim)
                             for shape in _configurations(q, role, position, r, s))
            if admissible:
                best = max(best, q)
            elif q > settled_after:
                break
    return best


@memoized(bounds_cache, key_prefix="tables")
def prime_value_bounds(dim: int) -> PrimeTables:
    """Per-position prime limits, found by increasing one prime at a time.

    The search runs over the count limits in force; the published tables
    are returned alongside.
    """
    counts = prime_count_bounds(dim)
    squared: list[int] = []
    if dim == 4:
        squared = [_position_limit(4, "squared", i, counts) for i in range(1, counts.max_r + 1)]
    max_simple = max(counts.max_s.values())
    simple = [_position_limit(dim, "simple", j, counts) for j in range(1, max_simple + 1)]
    published = PUBLISHED_TABLES[dim]
    tables = PrimeTables(dim, published["squared"], published["simple"],
                         tuple(squared), tuple(simple))
    logger.info(f"Prime tables in dimension {dim}: squared={squared}, simple={simple}")
    for row in tables.comparison():
        if row["computed"] != row["published"]:
            logger.info(
                f"{row['role']} position {row['position']}: computed {row['computed']}, "
                f"published {row['published']}, limit {row['limit']}"
            )
    return tables


def shapes_within_bounds(dim: int) -> Iterator[DetShape]:
    """Every shape passing ``within_margin`` under the count limits in force.

    Primes come in increasing order. At each slot the remaining slots are
    filled with the smallest possible primes; when that completion fails,
    every larger choice for the slot fails too and the loop over the slot stops.
    """
    counts = prime_count_bounds(dim)
    for r, max_s in sorted(counts.max_s.items()):
        for s in range(max_s + 1):
            yield from _shapes_of_size(dim, r, s)


def _completion_admits(dim: int, squared: list[int], simple: list[int], r: int, s: int) -> bool:
    sq_rest = _fill(r - len(squared), set(), above=squared[-1] if squared else 1) or []
    sim_rest = _fill(s - len(simple), set(), above=simple[-1] if simple else 1) or []
    rational, radicand = _formal_m_parts(squared + sq_rest, simple + sim_rest, dim)
    quotient = (1 + TABLE_MARGIN) * nref_value([2] * r + [1] * s, dim) / rational
    return quotient * quotient >= radicand


def _shapes_of_size(dim: int, r: int, s: int) -> Iterator[DetShape]:
    squared: list[int] = []
    simple: list[int] = []

    def extend() -> Iterator[DetShape]:
        if len(squared) == r and len(simple) == s:
            shape = DetShape(tuple(squared), tuple(simple))
            if within_margin(shape, dim):
                yield shape
            return
        filling_squared = len(squared) < r
        slot = squared if filling_squared else simple
        p = slot[-1] if slot else 1
        while p < _PRIME_SEARCH_LIMIT:
            p = int(nextprime(p))
            if p in squared or p in simple:
                continue
            slot.append(p)
            if not _completion_admits(dim, squared, simple, r, s):
                slot.pop()
                break
            yield from extend()
            slot.pop()

    yield from extend()


# =============================================================================
# Watson pre-images
# =============================================================================


def watson_prime_term(p: int, dim: int) -> Fraction:
    """Factor by which the mass of a Watson pre-image at p exceeds the mass of its image.

    (1 + 1/p)^-2 p^2 (1 - p^-2) in dimension 3; in dimension 4 the p^3 variant
    times zeta(4) / (2 zeta(2)^2) = 1/5.
    """
    _require_dim(dim)
    base = Fraction(p * p * (p - 1), p + 1)
    return base if dim == 3 else base * Fraction(p, 5)


def watson_prime_cutoff(nref: Fraction, mass: Fraction, dim: int, det: int = 1) -> int | None:
    """Largest odd prime p not dividing det that can carry a totally-reflective pre-image.

    A pre-image at p needs growth * Nref / mass >= watson_prime_term(p); the
    term increases with p. Returns None when no odd prime qualifies.
    """
    _require_dim(dim)
    budget = WATSON_GROWTH[dim] * Fraction(nref) / Fraction(mass)
    best: int | None = None
    p = 2
    while True:
        p = int(nextprime(p))
        if watson_prime_term(p, dim) > budget:
            return best
        if det % p:
            best = p
