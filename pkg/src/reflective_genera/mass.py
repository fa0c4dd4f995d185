"""Exact Minkowski-Siegel mass of a genus.

The mass is assembled as the standard mass times local correction factors at
the primes dividing 2 det. Every factor is carried as ``c * sqrt(m) * pi^k``
with rational c and k and square free m; the transcendental parts have to
cancel in the product, otherwise the local factors were derived wrongly and
``MassConsistencyError`` is raised.
"""

import logging
import math
from dataclasses import dataclass
from fractions import Fraction

from sympy import Rational, bernoulli, factorint, jacobi_symbol

from reflective_genera.lattice import GramLattice
from reflective_genera.local import (
    GenusSymbol,
    LocalSymbol,
    canonical_local,
    check_existence,
    genus_symbol,
    kronecker_two,
    legendre,
)
from reflective_genera.utils.cache import bernoulli_cache, mass_cache
from reflective_genera.utils.errors import MassConsistencyError

logger = logging.getLogger(__name__)


# =============================================================================
# Exact terms with square roots and powers of pi
# =============================================================================


def _square_free_split(m: int) -> tuple[int, int]:
    """Write m = a^2 * b with b square free; returns (a, b)."""
    outside, inside = 1, 1
    for p, e in factorint(m).items():
        outside *= int(p) ** (e // 2)
        if e % 2:
            inside *= int(p)
    return outside, inside


@dataclass(frozen=True)
class ExactTerm:
    """The real number ``coeff * sqrt(root) * pi^pi_power``."""

    coeff: Fraction
    root: int = 1
    pi_power: Fraction = Fraction(0)

    @classmethod
    def rational(cls, value: Fraction | int) -> "ExactTerm":
        return cls(Fraction(value))

    @classmethod
    def sqrt(cls, m: int) -> "ExactTerm":
        outside, inside = _square_free_split(m)
        return cls(Fraction(outside), inside)

    @classmethod
    def pi(cls, power: Fraction | int) -> "ExactTerm":
        return cls(Fraction(1), 1, Fraction(power))

    def __mul__(self, other: "ExactTerm") -> "ExactTerm":
        g = math.gcd(self.root, other.root)
        return ExactTerm(
            self.coeff * other.coeff * g,
            self.root * other.root // (g * g),
            self.pi_power + other.pi_power,
        )

    def inverse(self) -> "ExactTerm":
        # 1/sqrt(m) = sqrt(m)/m
        return ExactTerm(1 / (self.coeff * self.root), self.root, -self.pi_power)

    def to_fraction(self) -> Fraction:
        if self.root != 1 or self.pi_power != 0:
            raise MassConsistencyError(
                f"residual sqrt({self.root}) * pi^{self.pi_power} in an exact mass"
            )
        return self.coeff

    def __float__(self) -> float:
        return float(self.coeff) * math.sqrt(self.root) * math.pi ** float(self.pi_power)


def _product(terms: list[ExactTerm]) -> ExactTerm:
    result = ExactTerm.rational(1)
    for term in terms:
        result = result * term
    return result


# =============================================================================
# Gamma, zeta and L-values
# =============================================================================


def gamma_half(j: int) -> ExactTerm:
    """Gamma(j/2) for a positive integer j."""
    if j % 2 == 0:
        return ExactTerm.rational(math.factorial(j // 2 - 1))
    k = (j - 1) // 2
    value = Fraction(math.factorial(2 * k), 4**k * math.factorial(k))
    return ExactTerm(value, 1, Fraction(1, 2))


def _to_fraction(value: Rational) -> Fraction:
    return Fraction(int(value.p), int(value.q))


def zeta_even(k: int) -> ExactTerm:
    """zeta(k) for even k >= 2 through the Bernoulli number B_k."""
    if k < 2 or k % 2:
        raise ValueError(f"zeta({k}) is not an even zeta value")
    b = bernoulli_cache.get_or_set(f"B:{k}", lambda: _to_fraction(bernoulli(k)))
    coeff = (-1) ** (k // 2 + 1) * b * 2**k / (2 * math.factorial(k))
    return ExactTerm(coeff, 1, Fraction(k))


def fundamental_discriminant(D: int) -> int:
    """Discriminant of Q(sqrt(D)); 1 when D is a square."""
    sign = 1 if D > 0 else -1
    _, core = _square_free_split(abs(D))
    core *= sign
    if core == 1:
        return 1
    return core if core % 4 == 1 else 4 * core


def kronecker(D: int, a: int) -> int:
    """Kronecker symbol (D/a) for a positive integer a."""
    if a <= 0:
        raise ValueError("kronecker symbol needs a positive bottom argument")
    value = 1
    while a % 2 == 0:
        if D % 2 == 0:
            return 0
        value *= kronecker_two(D)
        a //= 2
    if a == 1:
        return value
    return value * int(jacobi_symbol(D % a, a))


def generalized_bernoulli(s: int, D0: int) -> Fraction:
    """B_{s, chi} for the primitive quadratic character of discriminant D0."""

    def compute() -> Fraction:
        f = abs(D0)
        total = Fraction(0)
        for a in range(1, f + 1):
            chi = kronecker(D0, a)
            if chi:
                total += chi * _to_fraction(bernoulli(s, Rational(a, f)))
        return total * f ** (s - 1)

    result: Fraction = bernoulli_cache.get_or_set(f"B:{s}:{D0}", compute)
    return result


def quadratic_l_value(s: int, D0: int) -> ExactTerm:
    """L(s, chi_D0) at a positive integer s of matching parity.

    Uses the functional equation form
    L(s, chi) = (-1)^(1 + (s - delta)/2) sqrt(f)/2 (2 pi / f)^s B_{s,chi} / s!
    with delta = 0 for real characters of positive discriminant, 1 otherwise.
    """
    delta = 0 if D0 > 0 else 1
    if (s - delta) % 2:
        raise MassConsistencyError(f"L({s}, chi_{D0}) is not a rational multiple of a pi power")
    f = abs(D0)
    coeff = (
        (-1) ** (1 + (s - delta) // 2)
        * Fraction(2**s, 2 * f**s)
        * generalized_bernoulli(s, D0)
        / math.factorial(s)
    )
    return ExactTerm(coeff, 1, Fraction(s)) * ExactTerm.sqrt(f)


def _euler_factor(chi: int, p: int, s: int) -> Fraction:
    return 1 - Fraction(chi, p**s)


def _character_index(n: int) -> int:
    return (n + 1) // 2


# =============================================================================
# Standard mass
# =============================================================================


def _standard_mass_head(n: int) -> list[ExactTerm]:
    """The factors of std(n, D) that do not depend on D."""
    s = _character_index(n)
    terms = [ExactTerm.rational(2), ExactTerm.pi(Fraction(-n * (n + 1), 4))]
    terms += [gamma_half(j) for j in range(1, n + 1)]
    terms += [zeta_even(2 * k) for k in range(1, s)]
    return terms


def _stripped_standard_mass(n: int, D: int, primes: list[int]) -> ExactTerm:
    """std(n, D) with the Euler factors at ``primes`` removed from zeta_D."""
    s = _character_index(n)
    terms = _standard_mass_head(n)
    if n % 2 == 0:
        D0 = fundamental_discriminant(D)
        terms.append(quadratic_l_value(s, D0))
        for p in primes:
            terms.append(ExactTerm.rational(_euler_factor(kronecker(D0, p), p, s)))
    return _product(terms)


def signed_determinant(n: int, det: int) -> int:
    """D = (-1)^s det with s = ceil(n/2)."""
    return (-1) ** _character_index(n) * det


def standard_mass(n: int, D: int) -> ExactTerm:
    """std(n, D) = 2 pi^(-n(n+1)/4) prod Gamma(j/2) zeta(2)...zeta(2s-2) zeta_D(s).

    zeta_D(s) = prod_p (1 - (D/p) p^-s)^-1 only appears for even n. For odd
    n the result is rational; for even n it may carry sqrt|D|.
    """
    if D == 0:
        raise ValueError("standard mass needs a nonzero discriminant")
    if not 1 <= n <= 6:
        raise ValueError(f"standard mass is only supported for ranks 1..6, got {n}")
    primes = sorted({2} | {int(p) for p in factorint(abs(D))})
    term = _stripped_standard_mass(n, D, primes)
    if n % 2 == 0:
        s = _character_index(n)
        for p in primes:
            term = term * ExactTerm.rational(1 / _euler_factor(kronecker(D, p), p, s))
    return term


def zeta_d_lower_bound(s: int) -> ExactTerm:
    """zeta(2s)/zeta(s), a lower bound for zeta_D(s) at even s.

    Each Euler factor (1 - (D/p) p^-s)^-1 is at least (1 + p^-s)^-1.
    """
    if s < 2 or s % 2:
        raise ValueError(f"no closed form lower bound for zeta_D({s})")
    return zeta_even(2 * s) * zeta_even(s).inverse()


def standard_mass_floor(n: int) -> Fraction:
    """Lower bound for std(n, D) over all D.

    Exact for odd n, where zeta_D does not occur; for n = 4 zeta_D(2) is
    replaced by ``zeta_d_lower_bound(2)``. Gives 1/6 for n = 3 and 1/90 for n = 4.
    """
    if not 1 <= n <= 6:
        raise ValueError(f"standard mass is only supported for ranks 1..6, got {n}")
    terms = _standard_mass_head(n)
    if n % 2 == 0:
        terms.append(zeta_d_lower_bound(_character_index(n)))
    return _product(terms).to_fraction()


def standard_local_inverse(n: int, p: int) -> Fraction:
    """2 prod_{k=1}^{s-1} (1 - p^-2k): the part of 1/std_p outside zeta_D."""
    s = _character_index(n)
    value = Fraction(2)
    for k in range(1, s):
        value *= 1 - Fraction(1, p ** (2 * k))
    return value


# =============================================================================
# Local factors
# =============================================================================


def diagonal_factor(species: int, p: int) -> Fraction:
    """M_p(species): the diagonal factor of an orthogonal group of the given species."""
    if species == 0:
        return Fraction(1)
    n = abs(species)
    k = (n + 1) // 2
    mp = Fraction(2)
    for j in range(1, k):
        mp *= 1 - Fraction(1, p ** (2 * j))
    if n % 2 == 0:
        mp *= 1 - Fraction(1 if species > 0 else -1, p**k)
    return 1 / mp


def species_odd(sym: LocalSymbol) -> list[int]:
    """Species of the constituents at an odd prime."""
    result = []
    for c in sym.constituents:
        if c.dim % 2 == 0 and c.sign != legendre((-1) ** (c.dim // 2), sym.p):
            result.append(-c.dim)
        else:
            result.append(c.dim)
    return result


def species_two(sym: LocalSymbol) -> list[int]:
    """Species at 2, on the dense scale range around the constituents.

    Empty scales count as type II constituents of dimension 0; they get
    species 1 when bound to a neighbouring odd constituent.
    """
    by_scale = {c.scale_exp: c for c in sym.constituents}
    lo = min(by_scale) - 1
    hi = max(by_scale) + 1

    def odd(scale: int) -> bool:
        c = by_scale.get(scale)
        return c is not None and c.odd

    result = []
    for scale in range(lo, hi + 1):
        c = by_scale.get(scale)
        dim = c.dim if c else 0
        sign = c.sign if c else 1
        is_odd = odd(scale)
        free = not (odd(scale - 1) or odd(scale + 1))
        octane = (c.oddity if c else 0) + (4 if sign == -1 else 0)
        octane %= 8
        t = dim // 2 if (not is_odd or dim % 2) else dim // 2 - 1
        if free and octane in (0, 1, 7):
            result.append(2 * t)
        elif free and octane in (3, 4, 5):
            result.append(-2 * t)
        else:
            result.append(2 * t + 1)
    return result


def _cross_term(sym: LocalSymbol) -> ExactTerm:
    cs = sym.constituents
    exponent = sum(
        (cs[j].scale_exp - cs[i].scale_exp) * cs[i].dim * cs[j].dim
        for j in range(len(cs))
        for i in range(j)
    )
    term = ExactTerm.rational(Fraction(sym.p) ** (exponent // 2))
    if exponent % 2:
        term = term * ExactTerm.sqrt(sym.p)
    return term


def local_factor_odd(sym: LocalSymbol) -> ExactTerm:
    """m_p for odd p: diagonal factors times p^(sum (s_j - s_i) n_i n_j / 2)."""
    if sym.p == 2:
        raise ValueError("local_factor_odd called at p = 2")
    diagonal = math.prod((diagonal_factor(sp, sym.p) for sp in species_odd(sym)), start=Fraction(1))
    return ExactTerm.rational(diagonal) * _cross_term(sym)


def local_factor_two(sym: LocalSymbol) -> ExactTerm:
    """m_2: diagonal factors, cross term and the type factor 2^(n(I,I) - n(II))."""
    if sym.p != 2:
        raise ValueError("local_factor_two called at an odd prime")
    sym = canonical_local(sym)
    diagonal = math.prod((diagonal_factor(sp, 2) for sp in species_two(sym)), start=Fraction(1))
    cs = sym.constituents
    n_type_two = sum(c.dim for c in cs if not c.odd)
    n_odd_pairs = sum(
        1
        for a, b in zip(cs, cs[1:], strict=False)
        if a.odd and b.odd and b.scale_exp == a.scale_exp + 1
    )
    type_factor = Fraction(2) ** (n_odd_pairs - n_type_two)
    return ExactTerm.rational(diagonal * type_factor) * _cross_term(sym)


def local_factor(sym: LocalSymbol) -> ExactTerm:
    return local_factor_two(sym) if sym.p == 2 else local_factor_odd(sym)


# =============================================================================
# Mass
# =============================================================================


def _compute_mass(symbol: GenusSymbol) -> Fraction:
    n = symbol.rank
    if n == 1:
        return Fraction(1, 2)
    D = signed_determinant(n, symbol.determinant)
    primes = symbol.primes
    terms = [_stripped_standard_mass(n, D, primes)]
    for p in primes:
        terms.append(local_factor(symbol.local(p)))
        terms.append(ExactTerm.rational(standard_local_inverse(n, p)))
    value = _product(terms).to_fraction()
    if value <= 0:
        raise MassConsistencyError(f"non-positive mass {value} for {symbol}")
    return value


def mass(symbol: GenusSymbol) -> Fraction:
    """Exact mass sum_{M in genus} 1/|O(M)| of an existing genus."""
    check_existence(symbol)
    result: Fraction = mass_cache.get_or_set(repr(symbol.key), lambda: _compute_mass(symbol))
    logger.debug(f"mass of {symbol}: {result}")
    return result


def lattice_mass(lattice: GramLattice) -> Fraction:
    return mass(genus_symbol(lattice))

