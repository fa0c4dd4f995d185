"""p-adic invariants of lattices and Conway-Sloane genus symbols.

Covers the Jordan decomposition, local and global genus symbols with a
canonical 2-adic form, the text grammar used in the published tables, the
square free predicates, and the partial dual and Watson transformations on
symbols and on Gram matrices.
"""

import itertools
import logging
import math
import re
from collections import deque
from collections.abc import Iterable, Iterator, Sequence
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property, reduce

from sympy import factorint, isprime, legendre_symbol

from reflective_genera.lattice import (
    GramLattice,
    RationalGram,
    dual_basis_coordinates,
    gram_of_basis,
    lattice_from_basis,
    lattice_intersection,
    lattice_sum,
    rescale,
    standard_basis,
)
from reflective_genera.utils.cache import canonical_cache
from reflective_genera.utils.errors import (
    InconsistentDimensionError,
    NonexistentGenusError,
    NotPrimeError,
    SymbolSyntaxError,
)

logger = logging.getLogger(__name__)


# =============================================================================
# Arithmetic helpers
# =============================================================================


def valuation(x: int | Fraction, p: int) -> int:
    """p-adic valuation of a nonzero rational."""
    x = Fraction(x)
    if x == 0:
        raise ValueError("valuation of zero")
    v = 0
    num, den = abs(x.numerator), x.denominator
    while num % p == 0:
        num //= p
        v += 1
    while den % p == 0:
        den //= p
        v -= 1
    return v


def unit_part(x: int, p: int) -> int:
    """x with all factors of p removed."""
    while x % p == 0:
        x //= p
    return x


def kronecker_two(u: int) -> int:
    """Kronecker symbol (u/2): 0 for even u, else +1 iff u = +-1 mod 8."""
    if u % 2 == 0:
        return 0
    return 1 if u % 8 in (1, 7) else -1


def legendre(u: int | Fraction, p: int) -> int:
    """Legendre symbol for odd p, Kronecker symbol at 2, extended to p-units of Q."""
    u = Fraction(u)
    value = u.numerator * u.denominator
    if p == 2:
        return kronecker_two(value)
    return int(legendre_symbol(value % p, p))


def require_prime(p: int) -> None:
    if not isinstance(p, int) or p < 2 or not isprime(p):
        raise NotPrimeError(f"{p} is not a prime")


# =============================================================================
# Jordan decomposition
# =============================================================================


@dataclass(frozen=True)
class JordanBlock:
    """A p-adically unimodular block scaled by p^scale_exp."""

    scale_exp: int
    gram: GramLattice


@dataclass(frozen=True)
class JordanChain:
    p: int
    blocks: tuple[JordanBlock, ...]


def _swap(m: list[list[Fraction]], i: int, j: int) -> None:
    if i == j:
        return
    m[i], m[j] = m[j], m[i]
    for row in m:
        row[i], row[j] = row[j], row[i]


def _add_multiple(m: list[list[Fraction]], target: int, source: int, c: Fraction) -> None:
    """Basis change e_target += c * e_source."""
    n = len(m)
    for k in range(n):
        m[target][k] += c * m[source][k]
    for k in range(n):
        m[k][target] += c * m[k][source]


def _drop_leading(m: list[list[Fraction]], count: int) -> list[list[Fraction]]:
    return [row[count:] for row in m[count:]]


def _integral_block(block: list[list[Fraction]]) -> GramLattice:
    """Clear unit denominators by a square factor, keeping the p-adic class."""
    den = reduce(math.lcm, (x.denominator for row in block for x in row), 1)
    return GramLattice(tuple(tuple(int(x * den * den) for x in row) for row in block))


def jordan_decompose(lattice: GramLattice, p: int) -> JordanChain:
    """Jordan decomposition of L over the p-adic integers.

    Works over Z localized at p with exact fractions. Blocks are 1x1, or for
    p = 2 possibly even 2x2 blocks with odd off-diagonal entry.
    """
    require_prime(p)
    m = [[Fraction(x) for x in row] for row in lattice.gram]
    blocks: list[JordanBlock] = []
    while m:
        n = len(m)
        entries = [(valuation(m[i][j], p), i, j) for i in range(n) for j in range(i, n) if m[i][j]]
        v = min(e[0] for e in entries)
        diagonal = [i for (w, i, j) in entries if i == j and w == v]
        if diagonal:
            _swap(m, 0, diagonal[0])
        else:
            _, i, j = next(e for e in entries if e[0] == v)
            if p != 2:
                _add_multiple(m, i, j, Fraction(1))
                _swap(m, 0, i)
            else:
                _swap(m, 0, i)
                _swap(m, 1, j if j != 0 else i)
                a, b, d = m[0][0], m[0][1], m[1][1]
                det = a * d - b * b
                for k in range(2, n):
                    x, y = m[k][0], m[k][1]
                    c0 = (d * x - b * y) / det
                    c1 = (a * y - b * x) / det
                    _add_multiple(m, k, 0, -c0)
                    _add_multiple(m, k, 1, -c1)
                scale = Fraction(p) ** v
                block = [[m[0][0] / scale, m[0][1] / scale], [m[1][0] / scale, m[1][1] / scale]]
                blocks.append(JordanBlock(v, _integral_block(block)))
                m = _drop_leading(m, 2)
                continue
        a = m[0][0]
        for k in range(1, n):
            if m[k][0]:
                _add_multiple(m, k, 0, -m[k][0] / a)
        blocks.append(JordanBlock(v, _integral_block([[a / Fraction(p) ** v]])))
        m = _drop_leading(m, 1)
    blocks.sort(key=lambda b: b.scale_exp)
    return JordanChain(p, tuple(blocks))


# =============================================================================
# Symbols
# =============================================================================


@dataclass(frozen=True)
class Constituent:
    """Jordan constituent (p^scale_exp)^(sign * dim); parity and oddity only at 2."""

    scale_exp: int
    dim: int
    sign: int
    odd: bool = False
    oddity: int = 0

    def __post_init__(self) -> None:
        if self.sign not in (1, -1):
            raise SymbolSyntaxError(f"sign must be +1 or -1, got {self.sign}")
        if self.dim < 0 or self.scale_exp < 0:
            raise InconsistentDimensionError("negative dimension or scale")
        object.__setattr__(self, "oddity", self.oddity % 8 if self.odd else 0)


def _dyadic_valid(dim: int, sign: int, odd: bool, oddity: int) -> bool:
    """Whether a single 2-adic constituent with these invariants exists."""
    oddity %= 8
    if not odd:
        return dim % 2 == 0 and oddity == 0
    if dim == 1:
        return oddity in ((1, 7) if sign == 1 else (3, 5))
    if dim == 2:
        return oddity in ((0, 2, 6) if sign == 1 else (2, 4, 6))
    return oddity % 2 == dim % 2


def _valid_oddities(dim: int, sign: int) -> list[int]:
    return [t for t in range(8) if _dyadic_valid(dim, sign, True, t)]


@dataclass(frozen=True)
class LocalSymbol:
    """Local genus symbol at p: constituents sorted by scale, zero-dimensional ones dropped."""

    p: int
    constituents: tuple[Constituent, ...]

    def __post_init__(self) -> None:
        cs = tuple(sorted((c for c in self.constituents if c.dim > 0), key=lambda c: c.scale_exp))
        scales = [c.scale_exp for c in cs]
        if len(set(scales)) != len(scales):
            raise InconsistentDimensionError(f"repeated scale at p={self.p}")
        object.__setattr__(self, "constituents", cs)

    @property
    def dim(self) -> int:
        return sum(c.dim for c in self.constituents)

    @property
    def det_exponent(self) -> int:
        return sum(c.scale_exp * c.dim for c in self.constituents)

    @property
    def sign_product(self) -> int:
        return math.prod(c.sign for c in self.constituents)

    def constituent(self, scale_exp: int) -> Constituent | None:
        return next((c for c in self.constituents if c.scale_exp == scale_exp), None)

    def is_square_free(self) -> bool:
        return all(c.scale_exp <= 1 for c in self.constituents)

    def is_strongly_square_free(self) -> bool:
        if not self.is_square_free():
            return False
        d0 = self.constituent(0)
        d1 = self.constituent(1)
        return (d0.dim if d0 else 0) >= (d1.dim if d1 else 0)

    def excess(self) -> int:
        """p-excess of an odd local symbol, modulo 8."""
        total = 0
        for c in self.constituents:
            q = self.p**c.scale_exp
            total += c.dim * (q - 1)
            if c.scale_exp % 2 == 1 and c.sign == -1:
                total += 4
        return total % 8

    def oddity_total(self) -> int:
        """Sum of oddities plus 4 per odd-power constituent with sign -1 (p = 2)."""
        total = sum(c.oddity for c in self.constituents)
        total += 4 * sum(1 for c in self.constituents if c.scale_exp % 2 == 1 and c.sign == -1)
        return total % 8


# -----------------------------------------------------------------------------
# Canonical 2-adic form (sign walking and oddity fusion)
# -----------------------------------------------------------------------------


def _compartments(cs: Sequence[Constituent]) -> list[list[int]]:
    """Maximal runs of type I constituents with consecutive scales."""
    runs: list[list[int]] = []
    for k, c in enumerate(cs):
        if not c.odd:
            continue
        if runs and runs[-1][-1] == k - 1 and cs[k - 1].scale_exp == c.scale_exp - 1:
            runs[-1].append(k)
        else:
            runs.append([k])
    return runs


def _linked(a: Constituent, b: Constituent) -> bool:
    gap = b.scale_exp - a.scale_exp
    return (gap == 1 and (a.odd or b.odd)) or (gap == 2 and a.odd and b.odd)


def _realizable(members: Sequence[tuple[int, int]], total: int) -> bool:
    reachable = {0}
    for dim, sign in members:
        reachable = {(r + t) % 8 for r in reachable for t in _valid_oddities(dim, sign)}
    return total % 8 in reachable


def _smallest_distribution(members: Sequence[tuple[int, int]], total: int) -> tuple[int, ...]:
    options = [_valid_oddities(dim, sign) for dim, sign in members]
    for choice in itertools.product(*options):
        if sum(choice) % 8 == total % 8:
            return tuple(choice)
    raise NonexistentGenusError("compartment oddity is not realizable")


def _canonical_dyadic(cs: tuple[Constituent, ...]) -> tuple[Constituent, ...]:
    """Canonical representative of a 2-adic symbol under the CS equivalences."""
    compartments = _compartments(cs)
    owner = {k: idx for idx, comp in enumerate(compartments) for k in comp}
    moves = []
    for k in range(len(cs) - 1):
        if _linked(cs[k], cs[k + 1]):
            touched = {owner[j] for j in (k, k + 1) if j in owner}
            moves.append((k, k + 1, tuple(sorted(touched))))
    signs0 = tuple(c.sign for c in cs)
    totals0 = tuple(sum(cs[k].oddity for k in comp) % 8 for comp in compartments)

    def valid(signs: tuple[int, ...], totals: tuple[int, ...]) -> bool:
        for comp, total in zip(compartments, totals, strict=True):
            if not _realizable([(cs[k].dim, signs[k]) for k in comp], total):
                return False
        return all(cs[k].odd or cs[k].dim % 2 == 0 for k in range(len(cs)))

    start = (signs0, totals0)
    seen = {start}
    queue = deque([start])
    while queue:
        signs, totals = queue.popleft()
        for a, b, touched in moves:
            new_signs = list(signs)
            new_signs[a] = -new_signs[a]
            new_signs[b] = -new_signs[b]
            new_totals = list(totals)
            for idx in touched:
                new_totals[idx] = (new_totals[idx] + 4) % 8
            state = (tuple(new_signs), tuple(new_totals))
            if state not in seen and valid(*state):
                seen.add(state)
                queue.append(state)

    def order(state: tuple[tuple[int, ...], tuple[int, ...]]) -> tuple[tuple[int, ...], ...]:
        signs, totals = state
        return (tuple(int(s < 0) for s in reversed(signs)), totals)

    signs, totals = min(seen, key=order)
    oddities = [0] * len(cs)
    for comp, total in zip(compartments, totals, strict=True):
        dist = _smallest_distribution([(cs[k].dim, signs[k]) for k in comp], total)
        for k, t in zip(comp, dist, strict=True):
            oddities[k] = t
    return tuple(
        Constituent(c.scale_exp, c.dim, signs[k], c.odd, oddities[k]) for k, c in enumerate(cs)
    )


def canonical_local(symbol: LocalSymbol) -> LocalSymbol:
    """Canonical form: identity at odd primes, sign walking and oddity fusion at 2."""
    if symbol.p != 2:
        return symbol
    key = repr(symbol.constituents)
    return canonical_cache.get_or_set(
        key, lambda: LocalSymbol(2, _canonical_dyadic(symbol.constituents))
    )


@dataclass(frozen=True, eq=False)
class GenusSymbol:
    """Global genus symbol of a positive definite lattice.

    The constituents are kept as given (so a parsed string prints back
    verbatim); equality and hashing go through the canonical form.
    """

    rank: int
    local_symbols: tuple[LocalSymbol, ...]
    _by_prime: dict[int, LocalSymbol] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        symbols = tuple(sorted(self.local_symbols, key=lambda s: s.p))
        object.__setattr__(self, "local_symbols", symbols)
        object.__setattr__(self, "_by_prime", {s.p: s for s in symbols})
        for s in symbols:
            if s.dim != self.rank:
                raise InconsistentDimensionError(
                    f"dimensions at p={s.p} add up to {s.dim}, rank is {self.rank}"
                )
        if 2 not in self._by_prime:
            raise InconsistentDimensionError("symbol has no 2-adic part")

    @cached_property
    def determinant(self) -> int:
        return math.prod(s.p**s.det_exponent for s in self.local_symbols)

    @property
    def primes(self) -> list[int]:
        """Primes dividing 2 det."""
        return sorted({2} | set(factorint(self.determinant)))

    def local(self, p: int) -> LocalSymbol:
        """Local symbol at p, synthesized as unimodular when p does not divide 2 det."""
        if p in self._by_prime:
            return self._by_prime[p]
        sign = legendre(self.determinant, p)
        return LocalSymbol(p, (Constituent(0, self.rank, sign),))

    @cached_property
    def key(self) -> tuple[object, ...]:
        parts = []
        for s in self.local_symbols:
            if s.p != 2 and s.det_exponent == 0:
                continue
            parts.append((s.p, canonical_local(s).constituents))
        return (self.rank, tuple(parts))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, GenusSymbol):
            return NotImplemented
        return self.key == other.key

    def __hash__(self) -> int:
        return hash(self.key)

    def __repr__(self) -> str:
        return f"GenusSymbol(rank={self.rank}, {print_symbol(self)})"

    def __str__(self) -> str:
        return print_symbol(self)

    @property
    def is_even(self) -> bool:
        unimodular = self.local(2).constituent(0)
        return unimodular is None or not unimodular.odd

    def canonical(self) -> "GenusSymbol":
        return GenusSymbol(
            self.rank, tuple(canonical_local(s) for s in self.local_symbols
                             if s.p == 2 or s.det_exponent > 0)
        )

    def sort_key(self) -> tuple[int, str]:
        return (self.determinant, print_symbol(self.canonical()))

    def shape(self) -> "DetShape":
        return DetShape.from_determinant(self.determinant)


# -----------------------------------------------------------------------------
# Determinant shapes
# -----------------------------------------------------------------------------


_SHAPE_FACTOR = re.compile(r"^(?P<p>\d+)(?:\^(?P<e>\d+))?$")


@dataclass(frozen=True)
class DetShape:
    """det = p_1^2 ... p_r^2 q_1 ... q_s with distinct primes, each tuple sorted."""

    squared: tuple[int, ...] = ()
    simple: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        squared = tuple(sorted(self.squared))
        simple = tuple(sorted(self.simple))
        for p in squared + simple:
            require_prime(p)
        if len(set(squared + simple)) != len(squared) + len(simple):
            raise InconsistentDimensionError(f"repeated prime in shape {squared} / {simple}")
        object.__setattr__(self, "squared", squared)
        object.__setattr__(self, "simple", simple)

    @classmethod
    def from_determinant(cls, det: int) -> "DetShape":
        if det < 1:
            raise InconsistentDimensionError(f"determinant must be positive, got {det}")
        squared, simple = [], []
        for p, e in factorint(det).items():
            if e > 2:
                raise InconsistentDimensionError(
                    f"{p}^{e} divides {det}; shapes allow exponents 1, 2"
                )
            (squared if e == 2 else simple).append(int(p))
        return cls(tuple(squared), tuple(simple))

    @classmethod
    def parse(cls, text: str) -> "DetShape":
        """Parse ``1155`` or ``3^2*5*7`` (``.`` also separates factors)."""
        text = text.strip()
        if text.isdigit():
            return cls.from_determinant(int(text))
        squared, simple = [], []
        for token in re.split(r"[*.]", text):
            match = _SHAPE_FACTOR.match(token.strip())
            if not match:
                raise SymbolSyntaxError(f"bad shape factor {token!r} in {text!r}")
            p, e = int(match["p"]), int(match["e"] or 1)
            if e not in (1, 2):
                raise SymbolSyntaxError(f"exponent {e} not allowed in shape {text!r}")
            (squared if e == 2 else simple).append(p)
        return cls(tuple(squared), tuple(simple))

    @property
    def r(self) -> int:
        return len(self.squared)

    @property
    def s(self) -> int:
        return len(self.simple)

    @property
    def big_omega(self) -> int:
        return 2 * self.r + self.s

    @property
    def determinant(self) -> int:
        return math.prod(p * p for p in self.squared) * math.prod(self.simple)

    @property
    def exponents(self) -> dict[int, int]:
        return {**{p: 2 for p in self.squared}, **{q: 1 for q in self.simple}}

    def valid_for(self, dim: int) -> bool:
        return dim == 4 or (dim == 3 and self.r == 0)

    def __str__(self) -> str:
        factors = [f"{p}^2" for p in self.squared] + [str(q) for q in self.simple]
        return "*".join(factors) or "1"


# -----------------------------------------------------------------------------
# Existence
# -----------------------------------------------------------------------------


def existence_problems(symbol: GenusSymbol) -> list[str]:
    """Violated existence conditions; empty when a genus with this symbol exists."""
    problems = []
    det = symbol.determinant
    for s in symbol.local_symbols:
        if s.p != 2 and det % s.p != 0 and s.det_exponent == 0:
            if s.sign_product != legendre(det, s.p):
                problems.append(f"sign at unramified prime {s.p}")
            continue
        expected = legendre(unit_part(det, s.p), s.p)
        if s.sign_product != expected:
            problems.append(f"determinant condition fails at p={s.p}")
    dyadic = symbol.local(2)
    cs = dyadic.constituents
    for c in cs:
        if not c.odd and c.dim % 2:
            problems.append(f"type II constituent of odd dimension at 2^{c.scale_exp}")
    for comp in _compartments(cs):
        members = [(cs[k].dim, cs[k].sign) for k in comp]
        if not _realizable(members, sum(cs[k].oddity for k in comp)):
            problems.append("2-adic compartment oddity not realizable")
    excess = sum(s.excess() for s in symbol.local_symbols if s.p != 2)
    if dyadic.oddity_total() != (symbol.rank + excess) % 8:
        problems.append("oddity formula fails")
    return problems


def exists(symbol: GenusSymbol) -> bool:
    return not existence_problems(symbol)


def check_existence(symbol: GenusSymbol) -> GenusSymbol:
    problems = existence_problems(symbol)
    if problems:
        raise NonexistentGenusError("; ".join(problems))
    return symbol


# -----------------------------------------------------------------------------
# Symbols of lattices
# -----------------------------------------------------------------------------


def local_symbol(lattice: GramLattice, p: int) -> LocalSymbol:
    """Local symbol of L at p read off the Jordan decomposition."""
    chain = jordan_decompose(lattice, p)
    grouped: dict[int, list[GramLattice]] = {}
    for block in chain.blocks:
        grouped.setdefault(block.scale_exp, []).append(block.gram)
    constituents = []
    for scale, blocks in sorted(grouped.items()):
        dim = sum(b.rank for b in blocks)
        det = math.prod(b.determinant for b in blocks)
        sign = legendre(det, p)
        if p == 2:
            units = [b.gram[0][0] for b in blocks if b.rank == 1]
            constituents.append(Constituent(scale, dim, sign, bool(units), sum(units)))
        else:
            constituents.append(Constituent(scale, dim, sign))
    result = LocalSymbol(p, tuple(constituents))
    return canonical_local(result)


def genus_symbol(lattice: GramLattice) -> GenusSymbol:
    """Canonical genus symbol of L."""
    primes = sorted({2} | set(factorint(lattice.determinant)))
    return GenusSymbol(lattice.rank, tuple(local_symbol(lattice, p) for p in primes))


def is_square_free(symbol: GenusSymbol) -> bool:
    return all(s.is_square_free() for s in symbol.local_symbols)


def is_strongly_square_free(symbol: GenusSymbol) -> bool:
    return all(s.is_strongly_square_free() for s in symbol.local_symbols)


# =============================================================================
# Text grammar
# =============================================================================

_FACTOR = re.compile(
    r"(?P<q>\d+)"
    r"(?:_(?:\{(?P<sub_braced>II|\d+)\}|(?P<sub>II|\d)))?"
    r"\^(?:\{(?P<sign_braced>[+-])(?P<dim_braced>\d+)\}|(?P<sign>[+-])(?P<dim>\d))"
)
_WRAPPED = re.compile(r"^(?P<type>II|I)?\((?P<body>.*)\)$")


def _prime_power(q: int) -> tuple[int, int]:
    if q == 1:
        return 2, 0
    factors = factorint(q)
    if len(factors) != 1:
        raise SymbolSyntaxError(f"{q} is not a prime power")
    ((p, e),) = factors.items()
    return int(p), int(e)


def _normalize_text(text: str) -> str:
    text = re.sub(r"\s+", "", text).strip("$")
    text = text.replace(r"\mathrm{II}", "II").replace(r"\mathrm{I}", "I")
    return text


def parse_symbol(text: str, rank: int) -> GenusSymbol:
    """Parse a genus symbol such as ``I(2_5^{-1}3^{-1})`` for a lattice of the given rank.

    Unimodular constituents are omitted in the printed form and are
    reconstructed from the rank, the determinant and the oddity formula.
    """
    if rank < 1:
        raise InconsistentDimensionError("rank must be positive")
    body = _normalize_text(text)
    wrapped = _WRAPPED.match(body)
    lattice_type = None
    if wrapped:
        lattice_type = wrapped.group("type") or None
        body = wrapped.group("body")
    if not body:
        raise SymbolSyntaxError("empty symbol")

    given: dict[int, dict[int, Constituent]] = {}
    pos = 0
    while pos < len(body):
        match = _FACTOR.match(body, pos)
        if not match:
            raise SymbolSyntaxError(f"malformed token at {body[pos:]!r}")
        pos = match.end()
        q = int(match.group("q"))
        p, scale = _prime_power(q)
        sub = match.group("sub_braced") or match.group("sub")
        sign = 1 if (match.group("sign_braced") or match.group("sign")) == "+" else -1
        dim = int(match.group("dim_braced") or match.group("dim"))
        if p == 2:
            if sub is None:
                raise SymbolSyntaxError(f"2-adic factor {q} needs a parity subscript")
            odd = sub != "II"
            constituent = Constituent(scale, dim, sign, odd, int(sub) if odd else 0)
        else:
            if sub is not None:
                raise SymbolSyntaxError(f"odd factor {q} cannot carry a subscript")
            constituent = Constituent(scale, dim, sign)
        per_prime = given.setdefault(p, {})
        if scale in per_prime:
            raise SymbolSyntaxError(f"factor {q} appears twice")
        per_prime[scale] = constituent
    given.setdefault(2, {})

    det = math.prod(
        p ** (c.scale_exp * c.dim) for p, cs in given.items() for c in cs.values()
    )
    odd_locals = []
    for p in sorted(given):
        if p == 2:
            continue
        odd_locals.append(_complete_local(p, given[p], rank, det, None))
    excess = sum(s.excess() for s in odd_locals)
    dyadic = _complete_local(2, given[2], rank, det, lattice_type, excess)
    symbol = GenusSymbol(rank, (dyadic, *odd_locals))
    return check_existence(symbol)


def _complete_local(
    p: int,
    given: dict[int, Constituent],
    rank: int,
    det: int,
    lattice_type: str | None,
    excess: int = 0,
) -> LocalSymbol:
    """Fill in the omitted unimodular constituent at p."""
    others = [c for s, c in given.items() if s != 0]
    if 0 in given:
        return LocalSymbol(p, tuple(given.values()))
    dim0 = rank - sum(c.dim for c in others)
    if dim0 < 0:
        raise InconsistentDimensionError(f"dimensions at p={p} exceed rank {rank}")
    if dim0 == 0:
        if p == 2 and lattice_type == "I":
            raise InconsistentDimensionError("odd lattice without unimodular 2-adic part")
        return LocalSymbol(p, tuple(others))
    sign = legendre(unit_part(det, p), p) * math.prod(c.sign for c in others)
    if p != 2:
        return LocalSymbol(p, (Constituent(0, dim0, sign), *others))
    odd = lattice_type != "II"
    oddity = 0
    if odd:
        partial = LocalSymbol(2, tuple(others))
        oddity = (rank + excess - partial.oddity_total()) % 8
    return LocalSymbol(2, (Constituent(0, dim0, sign, odd, oddity), *others))


def _format_factor(p: int, c: Constituent) -> str:
    q = p**c.scale_exp
    sign = "+" if c.sign == 1 else "-"
    if p != 2:
        return f"{q}^{{{sign}{c.dim}}}"
    sub = str(c.oddity) if c.odd else "II"
    return f"{q}_{sub}^{{{sign}{c.dim}}}"


def print_symbol(symbol: GenusSymbol) -> str:
    """Print in the published style, e.g. ``II(2_II^{-2}3^{+1})``."""
    dyadic = symbol.local(2)
    unimodular = dyadic.constituent(0)
    prefix = "I" if unimodular is not None and unimodular.odd else "II"
    factors = [
        _format_factor(s.p, c)
        for s in symbol.local_symbols
        for c in s.constituents
        if c.scale_exp > 0
    ]
    if not factors and unimodular is not None:
        factors = [_format_factor(2, unimodular)]
    return f"{prefix}({''.join(factors)})"


# =============================================================================
# Transformations on symbols
# =============================================================================


def _merge(constituents: Iterable[Constituent]) -> tuple[Constituent, ...]:
    """Combine constituents landing on the same scale."""
    merged: dict[int, Constituent] = {}
    for c in constituents:
        if c.dim == 0:
            continue
        if c.scale_exp not in merged:
            merged[c.scale_exp] = c
            continue
        old = merged[c.scale_exp]
        merged[c.scale_exp] = Constituent(
            c.scale_exp,
            old.dim + c.dim,
            old.sign * c.sign,
            old.odd or c.odd,
            old.oddity + c.oddity,
        )
    return tuple(merged[s] for s in sorted(merged))


def _rescale_local(symbol: LocalSymbol, unit: int) -> LocalSymbol:
    """Local symbol of ^u L at a prime not dividing the unit u."""
    cs = []
    for c in symbol.constituents:
        factor = legendre(unit, symbol.p) ** c.dim
        cs.append(Constituent(c.scale_exp, c.dim, c.sign * factor, c.odd, c.oddity * unit))
    return LocalSymbol(symbol.p, tuple(cs))


def _with_local(symbol: GenusSymbol, replacements: dict[int, LocalSymbol]) -> GenusSymbol:
    primes = {s.p for s in symbol.local_symbols} | set(replacements)
    locals_ = []
    for p in sorted(primes):
        s = replacements.get(p, symbol.local(p))
        if p == 2 or s.det_exponent > 0:
            locals_.append(s)
    return GenusSymbol(symbol.rank, tuple(locals_))


def partial_dual_symbol(symbol: GenusSymbol, p: int) -> GenusSymbol:
    """Symbol of D_p(L) = ^p((1/p)L cap L^#).

    At p scale 0 moves to 1 and scale i >= 1 moves to i - 1; elsewhere the
    lattice is rescaled by the unit p.
    """
    require_prime(p)
    at_p = symbol.local(p)
    shifted = _merge(
        Constituent(1 if c.scale_exp == 0 else c.scale_exp - 1, c.dim, c.sign, c.odd, c.oddity)
        for c in at_p.constituents
    )
    replacements = {p: LocalSymbol(p, shifted)}
    for s in symbol.local_symbols:
        if s.p != p:
            replacements[s.p] = _rescale_local(s, p)
    return _with_local(symbol, replacements)


def watson_symbol(symbol: GenusSymbol, p: int) -> GenusSymbol:
    """Symbol of E_p(L) = L + ((1/p)L cap pL^#): scales i >= 2 drop by 2 at p."""
    require_prime(p)
    at_p = symbol.local(p)
    shifted = _merge(
        Constituent(c.scale_exp if c.scale_exp <= 1 else c.scale_exp - 2,
                    c.dim, c.sign, c.odd, c.oddity)
        for c in at_p.constituents
    )
    return _with_local(symbol, {p: LocalSymbol(p, shifted)})


def primitive_symbol(symbol: GenusSymbol) -> GenusSymbol:
    """Symbol of the primitive lattice L' with L = ^c L'."""
    current = symbol
    for p in symbol.primes:
        while True:
            at_p = current.local(p)
            if not at_p.constituents or min(c.scale_exp for c in at_p.constituents) == 0:
                break
            lowered = LocalSymbol(p, tuple(
                Constituent(c.scale_exp - 1, c.dim, c.sign, c.odd, c.oddity)
                for c in at_p.constituents
            ))
            replacements = {p: lowered}
            for s in current.local_symbols:
                if s.p != p:
                    replacements[s.p] = _rescale_local(s, p)
            current = _with_local(current, replacements)
    return current


def is_primitive_symbol(symbol: GenusSymbol) -> bool:
    return all(
        min(c.scale_exp for c in s.constituents) == 0 for s in symbol.local_symbols
    )


# -----------------------------------------------------------------------------
# Enumeration of local options
# -----------------------------------------------------------------------------


def _constituent_options(p: int, scale: int, dim: int) -> list[Constituent]:
    if dim == 0:
        return [Constituent(scale, 0, 1)]
    options = []
    for sign in (1, -1):
        if p != 2:
            options.append(Constituent(scale, dim, sign))
            continue
        if dim % 2 == 0:
            options.append(Constituent(scale, dim, sign, False, 0))
        options.extend(Constituent(scale, dim, sign, True, t) for t in _valid_oddities(dim, sign))
    return options


def local_options(p: int, dims: dict[int, int]) -> Iterator[LocalSymbol]:
    """All local symbols at p with the given dimension per scale."""
    scales = sorted(dims)
    for choice in itertools.product(*(_constituent_options(p, s, dims[s]) for s in scales)):
        yield LocalSymbol(p, tuple(choice))


def watson_preimages(
    symbol: GenusSymbol, p: int, dim_cap: int | None = None
) -> list[GenusSymbol]:
    """Primitive genus symbols K != G with watson_symbol(K, p) == G.

    E_p moves scale s >= 2 to s - 2 and keeps scales 0 and 1, so a constituent
    of G at scale t >= 2 comes from scale t + 2 of K, while those at scales 0
    and 1 may send part of their dimension up to scales 2 and 3. ``dim_cap``
    bounds the dimension that moves.
    """
    require_prime(p)
    at_p = symbol.local(p)
    forced: dict[int, int] = {}
    splittable: list[tuple[int, int]] = []
    for c in at_p.constituents:
        if c.scale_exp <= 1:
            splittable.append((c.scale_exp, c.dim))
        else:
            forced[c.scale_exp + 2] = c.dim
    results: dict[GenusSymbol, None] = {}
    for moves in itertools.product(*(range(n + 1) for _, n in splittable)):
        moved = sum(forced.values()) + sum(moves)
        if moved == 0 or (dim_cap is not None and moved > dim_cap):
            continue
        dims = dict(forced)
        for (scale, n), k in zip(splittable, moves, strict=True):
            if n > k:
                dims[scale] = n - k
            if k:
                dims[scale + 2] = k
        if 0 not in dims:
            continue
        for option in local_options(p, dims):
            candidate = _with_local(symbol, {p: option})
            if candidate in results or not exists(candidate):
                continue
            if is_primitive_symbol(candidate) and watson_symbol(candidate, p) == symbol:
                results[candidate] = None
    logger.debug(f"{len(results)} Watson pre-images of {symbol} at {p}")
    return sorted(results, key=lambda g: g.sort_key())


def enumerate_symbols(
    rank: int, det: int, strongly_square_free: bool = True
) -> list[GenusSymbol]:
    """All existing genus symbols of the given rank and square free shape with determinant det.

    Each prime p with p^v || det gets scales 0 and 1 of dimensions (rank - v, v).
    """
    factors = {2: 0, **{int(p): int(e) for p, e in factorint(det).items()}}
    per_prime: list[list[LocalSymbol]] = []
    for p, v in sorted(factors.items()):
        if v > rank or (strongly_square_free and rank - v < v):
            return []
        per_prime.append(list(local_options(p, {0: rank - v, 1: v})))
    results: dict[GenusSymbol, None] = {}
    for combo in itertools.product(*per_prime):
        locals_ = tuple(s for s in combo if s.p == 2 or s.det_exponent > 0)
        candidate = GenusSymbol(rank, locals_)
        if candidate not in results and exists(candidate) and is_primitive_symbol(candidate):
            results[candidate] = None
    return sorted(results, key=lambda g: g.sort_key())


# =============================================================================
# Transformations on lattices
# =============================================================================


def partial_dual(lattice: GramLattice, p: int) -> GramLattice:
    """D_p(L) = ^p((1/p)L cap L^#) as a Gram matrix."""
    require_prime(p)
    n = lattice.rank
    basis = lattice_intersection(standard_basis(n, Fraction(1, p)), dual_basis_coordinates(lattice))
    inner_gram = RationalGram(gram_of_basis(lattice.gram, basis))
    return rescale(inner_gram, p).to_lattice()


def watson(lattice: GramLattice, p: int) -> GramLattice:
    """E_p(L) = L + ((1/p)L cap pL^#) as a Gram matrix."""
    require_prime(p)
    n = lattice.rank
    extra = lattice_intersection(
        standard_basis(n, Fraction(1, p)), dual_basis_coordinates(lattice, p)
    )
    basis = lattice_sum(standard_basis(n) + extra)
    return lattice_from_basis(lattice, basis)
