"""Tests for the mass bounds and the prime limits derived from them."""

from fractions import Fraction

import pytest

from reflective_genera.bounds import (
    PUBLISHED_TABLES,
    BoundValue,
    class_sum,
    first_primes,
    m_lower,
    mref_upper,
    nref_admits,
    nref_ratio,
    nref_upper,
    nref_value,
    prime_count_bounds,
    prime_value_bounds,
    published_max_s,
    ratio_report,
    shapes_within_bounds,
    symbol_nref,
    watson_prime_cutoff,
    watson_prime_term,
    within_margin,
)
from reflective_genera.local import DetShape, genus_symbol
from reflective_genera.utils.cache import bounds_cache

# =============================================================================
# Nref and M
# =============================================================================


class TestNref:
    """Tests for the reflective mass upper bound from root systems."""

    def test_unimodular_ternary(self):
        """Nref(1) = 17/48 in dimension 3."""
        assert nref_value([], 3) == Fraction(17, 48)

    def test_one_prime_ternary(self):
        """Nref(p) = 23/24 in dimension 3."""
        assert nref_value([1], 3) == Fraction(23, 24)

    def test_depends_only_on_exponents(self):
        """3*5 and 7*11 give the same Nref."""
        first = nref_upper(DetShape(simple=(3, 5)), 4)
        second = nref_upper(DetShape(simple=(7, 11)), 4)
        assert first.exact == second.exact

    def test_extended_is_larger(self):
        """The extended bound adds non-negative terms."""
        for dim in (3, 4):
            assert nref_value([1, 1], dim, extended=True) > nref_value([1, 1], dim)

    def test_grows_with_prime_count(self):
        """More prime factors allow more root systems."""
        values = [nref_value([1] * k, 4) for k in range(5)]
        assert values == sorted(values)

    def test_unsupported_dimension(self):
        """Only dimensions 3 and 4 have bounds."""
        with pytest.raises(ValueError, match="dimensions 3 and 4"):
            nref_value([], 5)

    def test_symbol_nref_uses_extended_form(self, identity_n):
        """A non strongly square free genus gets the extended bound."""
        from reflective_genera.lattice import GramLattice

        assert symbol_nref(genus_symbol(identity_n(3))) == Fraction(17, 48)
        scaled = genus_symbol(GramLattice.diagonal(1, 3, 3))
        assert symbol_nref(scaled) == nref_value([2], 3, extended=True)


class TestMassLowerBound:
    """Tests for M(d)."""

    def test_unimodular(self):
        """M(1) = 1/48 in dimension 3 and 1/2160 in dimension 4."""
        assert m_lower(DetShape(), 3).exact == Fraction(1, 48)
        assert m_lower(DetShape(), 4).exact == Fraction(1, 2160)

    def test_simple_primes_ternary(self):
        """Each odd simple prime q contributes (q - 1)/2; 2 contributes 1."""
        assert m_lower(DetShape(simple=(3, 5)), 3).exact == Fraction(1, 24)
        assert m_lower(DetShape(simple=(2, 7)), 3).exact == Fraction(1, 16)

    def test_irrational_quaternary(self):
        """In dimension 4 simple primes bring a square root."""
        value = m_lower(DetShape(simple=(3,)), 4)
        assert value.exact is None
        expected = 3 ** 0.5 * 3 / 2 / 2160
        assert float(value) == pytest.approx(expected)

    def test_squared_rejected_in_dimension_three(self):
        """Squared primes only occur in dimension 4."""
        with pytest.raises(ValueError):
            m_lower(DetShape(squared=(3,)), 3)

    def test_admits_small_determinants(self):
        """Small determinants pass the Nref test; the first ten primes do not."""
        assert nref_admits(DetShape(), 3)
        assert nref_admits(DetShape(squared=(3,), simple=(5,)), 4)
        assert not nref_admits(DetShape(simple=tuple(first_primes(10))), 3)

    def test_mref_is_positive(self):
        """Mref encloses a positive number."""
        assert mref_upper(DetShape(simple=(3, 5, 7)), 3).certainly_above(0)
        assert mref_upper(DetShape(squared=(3,), simple=(5,)), 4).certainly_above(0)


class TestBoundValue:
    """Tests for interval comparisons."""

    def test_exact_division(self):
        """Rational quotients stay exact."""
        ratio = BoundValue.from_fraction(Fraction(1, 3)) / BoundValue.from_fraction(2)
        assert ratio.exact == Fraction(1, 6)
        assert ratio.certainly_below(1)
        assert not ratio.certainly_above(1)

    def test_ratio_report(self):
        """The report carries every bound for the shape."""
        report = ratio_report(DetShape.parse("3*5*7"), 3)
        assert report["determinant"] == 105
        assert report["shape"] == "3*5*7"
        assert report["admissible"] == nref_admits(DetShape(simple=(3, 5, 7)), 3)
        assert {"M", "Nref", "Nref/M", "Mref", "Mref/M"} <= report.keys()
        assert report["M"]["exact"] == "1/8"

    def test_ratio_matches_admits(self):
        """Nref/M >= 1 exactly when the shape is admitted."""
        shape = DetShape(simple=(3, 5, 7, 11))
        assert nref_admits(shape, 3) == (not nref_ratio(shape, 3).certainly_below(1))


# =============================================================================
# Prime limits
# =============================================================================


class TestPrimeCounts:
    """Tests for the limits on the number of prime factors."""

    def test_ternary_counts(self):
        """At most nine simple primes in dimension 3, both witnesses below 1."""
        counts = prime_count_bounds(3)
        assert counts.max_r == 0
        assert counts.max_s == {0: 9}
        assert counts.computed_max_s == {0: 9}
        assert counts.capped == {}
        assert all(w.holds for w in counts.witnesses)
        assert {w.route for w in counts.witnesses} == {"nref", "mref"}

    def test_counts_are_cached(self):
        """The second call is served from the bounds cache."""
        prime_count_bounds(3)
        before = bounds_cache.stats.hits
        prime_count_bounds(3)
        assert bounds_cache.stats.hits == before + 1

    def test_published_count_limits(self):
        """s <= 8 - r in dimension 4, nine simple primes in dimension 3."""
        assert published_max_s(3) == {0: 9}
        limits = published_max_s(4)
        assert limits[0] == 8
        assert limits[3] == 5
        assert limits[8] == 0
        assert limits[9] == 0
        assert max(limits) == 9

    @pytest.mark.integration
    def test_quaternary_counts(self):
        """At most nine squared primes and s <= 8 - r in dimension 4."""
        counts = prime_count_bounds(4)
        assert counts.max_r == 9
        assert counts.max_s == {0: 7, 1: 7, 2: 6, 3: 5, 4: 4, 5: 3, 6: 2, 7: 1, 8: 0, 9: 0}
        assert all(s <= max(8 - r, 0) for r, s in counts.max_s.items())
        assert all(w.holds for w in counts.witnesses)
        assert counts.to_dict()["max_r"] == 9

    @pytest.mark.integration
    def test_quaternary_cap(self):
        """Nref alone admits one simple prime too many from r = 3 on."""
        counts = prime_count_bounds(4)
        assert counts.computed_max_s == {
            0: 7, 1: 7, 2: 6, 3: 6, 4: 5, 5: 4, 6: 3, 7: 2, 8: 1, 9: 0,
        }
        assert counts.capped == {3: 6, 4: 5, 5: 4, 6: 3, 7: 2, 8: 1}
        assert counts.to_dict()["published_max_s"]["3"] == 5


class TestMargin:
    """Tests for the slack applied to Nref by the prime limits and the enumeration."""

    def test_boundary_shape(self):
        """2*3*733 is admitted only with the margin; 2*3*739 not at all."""
        assert not nref_admits(DetShape(simple=(2, 3, 733)), 3)
        assert within_margin(DetShape(simple=(2, 3, 733)), 3)
        assert not within_margin(DetShape(simple=(2, 3, 739)), 3)

    def test_margin_contains_exact(self):
        """Every exactly admitted shape is admitted with the margin."""
        for shape in (DetShape(), DetShape(simple=(3, 5, 7)), DetShape(squared=(3,), simple=(5,))):
            dim = 4 if shape.squared else 3
            assert nref_admits(shape, dim)
            assert within_margin(shape, dim)

    def test_ratio_report_flags(self):
        """The report distinguishes the exact and the margin test."""
        report = ratio_report(DetShape(simple=(2, 3, 733)), 3)
        assert report["admissible"] is False
        assert report["within_margin"] is True


class TestClassSums:
    """Tests for the reflective class sums built from the Weyl order table."""

    def test_binary(self):
        """2 * 2^k/4 + 5/24."""
        assert class_sum(2, 0) == Fraction(17, 24)
        assert class_sum(2, 3) == Fraction(2 * 8, 4) + Fraction(5, 24)

    def test_ternary(self):
        """2 * 3^k/8 + 2^k/16 + 1/24."""
        for k in range(4):
            assert class_sum(3, k) == Fraction(2 * 3**k, 8) + Fraction(2**k, 16) + Fraction(1, 24)

    def test_quaternary(self):
        """3 * 4^k/16 + 2 * 3^k/32 + 2^k/72 + 3 * 2^k/96 + 53/5760."""
        for k in range(5):
            expected = (
                Fraction(3 * 4**k, 16)
                + Fraction(2 * 3**k, 32)
                + Fraction(2**k, 72)
                + Fraction(3 * 2**k, 96)
                + Fraction(53, 5760)
            )
            assert class_sum(4, k) == expected


@pytest.mark.integration
class TestPrimeTables:
    """Tests for the per-position prime limits."""

    def test_ternary_table(self):
        """The dimension 3 table is reproduced exactly."""
        tables = prime_value_bounds(3)
        assert tables.squared == ()
        assert tables.simple == PUBLISHED_TABLES[3]["simple"]
        assert tables.simple == (89, 257, 733, 1063, 1033, 607, 293, 113, 37)
        assert tables.computed_simple == (89, 257, 733, 1063, 1033, 607, 293, 113, 37)
        assert tables.matches_published

    def test_quaternary_table(self):
        """The dimension 4 tables are the published ones, recomputed limits kept alongside."""
        tables = prime_value_bounds(4)
        assert tables.squared == (191, 661, 1601, 2069, 1831, 997, 449, 157, 47)
        assert tables.simple == (11287, 6427, 3613, 1597, 653, 229, 67, 19)
        assert len(tables.computed_squared) == 9
        assert tables.computed_squared[-1] == 47
        assert len(tables.computed_simple) == 7
        for role in ("squared", "simple"):
            for i, published in enumerate(PUBLISHED_TABLES[4][role], start=1):
                assert tables.limit(role, i) >= published

    def test_rows_cover_both_tables(self):
        """Rows with no computed value still carry the published limit."""
        rows = prime_value_bounds(4).comparison()
        last = [r for r in rows if r["role"] == "simple"][-1]
        assert last["position"] == 8
        assert last["computed"] is None
        assert last["limit"] == 19

    def test_shapes_respect_tables(self):
        """Every enumerated ternary shape uses primes within the per-position limits."""
        tables = prime_value_bounds(3)
        for shape in shapes_within_bounds(3):
            assert within_margin(shape, 3)
            for i, q in enumerate(shape.simple, start=1):
                assert q <= tables.limit("simple", i)


# =============================================================================
# Watson pre-images
# =============================================================================


class TestWatsonTerm:
    """Tests for the mass growth of Watson pre-images."""

    def test_values(self):
        """p^2 (p-1)/(p+1) in dimension 3, times p/5 in dimension 4."""
        assert watson_prime_term(3, 3) == Fraction(9, 2)
        assert watson_prime_term(3, 4) == Fraction(27, 10)
        assert watson_prime_term(5, 3) == Fraction(50, 3)

    def test_increasing(self):
        """The term increases with p."""
        for dim in (3, 4):
            terms = [watson_prime_term(p, dim) for p in first_primes(12)[1:]]
            assert terms == sorted(terms)

    def test_cutoff(self):
        """With Nref = mass the ternary cutoff is 7, or 5 when 7 divides det."""
        assert watson_prime_cutoff(Fraction(1), Fraction(1), 3) == 7
        assert watson_prime_cutoff(Fraction(1), Fraction(1), 3, det=7) == 5

    def test_cutoff_none(self):
        """A large mass leaves no prime."""
        assert watson_prime_cutoff(Fraction(1), Fraction(100), 3) is None
