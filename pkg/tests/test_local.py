"""Tests for local invariants, genus symbols and the symbol transformations."""

import pytest

from reflective_genera.lattice import GramLattice
from reflective_genera.local import (
    DetShape,
    enumerate_symbols,
    exists,
    genus_symbol,
    is_primitive_symbol,
    is_square_free,
    is_strongly_square_free,
    jordan_decompose,
    local_symbol,
    parse_symbol,
    partial_dual,
    partial_dual_symbol,
    primitive_symbol,
    valuation,
    watson,
    watson_preimages,
    watson_symbol,
)
from reflective_genera.utils.errors import (
    InconsistentDimensionError,
    NonexistentGenusError,
    NotPrimeError,
    SymbolSyntaxError,
)

# Lattice column of the reference table of rank-4 genera (one entry per distinct string)
TABLE_SYMBOLS = [
    "I(1_4^{+4})",
    "I(2_5^{-1})",
    "I(3^{-1})",
    "I(3^{+1})",
    "II(2_II^{-2})",
    "I(2_2^{+2})",
    "II(5^{+1})",
    "I(5^{+1})",
    "I(5^{-1})",
    "I(2_7^{+1}3^{+1})",
    "I(2_5^{-1}3^{-1})",
    "I(2_3^{+3})",
    "II(3^{+2})",
    "I(3^{+2})",
    "I(3^{-2})",
    "I(2_3^{-1}5^{-1})",
    "II(2_2^{+2}3^{-1})",
    "II(2_6^{+2}3^{+1})",
    "I(2_II^{+2}3^{-1})",
    "I(2_II^{-2}3^{+1})",
    "I(2_0^{+2}3^{-1})",
    "I(2_0^{+2}3^{+1})",
    "I(2_5^{-1}7^{+1})",
    "I(3^{+1}5^{+1})",
    "I(3^{-1}5^{-1})",
    "I(3^{+1}5^{-1})",
    "I(2_3^{-1}3^{-2})",
    "I(2_1^{+1}3^{+2})",
    "II(2_II^{+2}5^{+1})",
    "II(2_II^{-2}5^{-1})",
    "I(2_2^{+2}5^{-1})",
    "II(3^{-1}7^{+1})",
    "I(2_1^{-3}3^{+1})",
    "I(2_5^{-3}3^{-1})",
    "II(5^{-2})",
    "I(5^{-2})",
    "I(5^{+2})",
    "I(3^{+3})",
    "I(3^{-3})",
    "II(2_2^{+2}7^{+1})",
    "I(2_II^{+2}7^{+1})",
    "II(2_II^{-2}3^{-2})",
    "II(2_II^{+2}3^{+2})",
    "II(2_0^{+2}3^{+2})",
    "I(2_II^{+2}3^{+2})",
    "I(2_2^{+2}3^{-2})",
    "I(2_2^{+2}3^{+2})",
    "II(3^{-2}5^{+1})",
    "II(7^{+2})",
    "I(2_3^{-1}3^{+3})",
    "I(2_3^{-1}3^{-3})",
]


# =============================================================================
# Jordan decomposition and local symbols
# =============================================================================


class TestJordanDecomposition:
    """Tests for jordan_decompose."""

    def test_unimodular_at_odd_prime(self, identity_n):
        """Z^3 at 5 is unimodular."""
        chain = jordan_decompose(identity_n(3), 5)
        assert {b.scale_exp for b in chain.blocks} == {0}
        assert sum(b.gram.rank for b in chain.blocks) == 3

    def test_a2_at_3(self, a2):
        """A2 at 3 splits as a unimodular line and a 3-modular line."""
        chain = jordan_decompose(a2, 3)
        assert [b.scale_exp for b in chain.blocks] == [0, 1]

    def test_diagonal_input(self):
        """A diagonal Gram matrix keeps its valuations."""
        chain = jordan_decompose(GramLattice.diagonal(1, 1, 1, 25), 5)
        assert [b.scale_exp for b in chain.blocks] == [0, 0, 0, 2]

    def test_even_block_at_two(self, d4):
        """D4 has no odd vectors, so only 2x2 blocks appear at 2."""
        chain = jordan_decompose(d4, 2)
        assert all(b.gram.rank == 2 for b in chain.blocks)
        assert [b.scale_exp for b in chain.blocks] == [0, 1]

    def test_not_prime(self, a2):
        """Composite moduli are rejected."""
        with pytest.raises(NotPrimeError):
            jordan_decompose(a2, 6)


class TestLocalSymbol:
    """Tests for local_symbol and genus_symbol."""

    def test_identity_4_at_two(self, identity_n):
        """Z^4 at 2 is one odd constituent of oddity 4."""
        sym = local_symbol(identity_n(4), 2)
        (c,) = sym.constituents
        assert (c.scale_exp, c.dim, c.sign, c.odd, c.oddity) == (0, 4, 1, True, 4)

    def test_a2_at_three(self, a2):
        """Both constituents of A2 at 3 carry sign (2/3) = -1."""
        sym = local_symbol(a2, 3)
        assert [(c.scale_exp, c.dim, c.sign) for c in sym.constituents] == [(0, 1, -1), (1, 1, -1)]

    def test_printed_forms(self, identity_n, a2, d4):
        """Standard lattices print in the table style."""
        assert str(genus_symbol(identity_n(4))) == "I(1_4^{+4})"
        assert str(genus_symbol(a2)) == "II(3^{-1})"
        assert str(genus_symbol(d4)) == "II(2_II^{-2})"

    def test_scaled_unit_lattice_at_two(self):
        """diag(1,1,1,2) has symbol I(2_5^{-1}) up to the 2-adic equivalences."""
        symbol = genus_symbol(GramLattice.diagonal(1, 1, 1, 2))
        assert symbol == parse_symbol("I(2_5^{-1})", 4)

    def test_direct_sum_determinant(self, a2, identity_n):
        """Determinants of symbols multiply under orthogonal sum."""
        from reflective_genera.lattice import direct_sum

        symbol = genus_symbol(direct_sum(a2, a2))
        assert symbol.determinant == 9
        assert symbol.rank == 4
        assert symbol.is_even


# =============================================================================
# Text grammar
# =============================================================================


class TestSymbolGrammar:
    """Tests for parse_symbol and print_symbol."""

    @pytest.mark.parametrize("text", TABLE_SYMBOLS)
    def test_table_round_trip(self, text):
        """Every table string parses and prints back unchanged."""
        assert str(parse_symbol(text, 4)) == text

    def test_parse_canonical_round_trip(self):
        """Printing the canonical form and parsing it back gives an equal genus."""
        for text in TABLE_SYMBOLS:
            symbol = parse_symbol(text, 4)
            assert parse_symbol(str(symbol.canonical()), 4) == symbol

    def test_parse_matches_lattices(self, identity_n, d4):
        """Parsed symbols equal the symbols of the lattices they name."""
        assert parse_symbol("I(1_4^{+4})", 4) == genus_symbol(identity_n(4))
        assert parse_symbol("II(2_II^{-2})", 4) == genus_symbol(d4)

    def test_latex_and_whitespace(self):
        """Braced subscripts, \\mathrm and spaces are accepted."""
        plain = parse_symbol("I(2_5^{-1}3^{-1})", 4)
        latex = parse_symbol(r"$\mathrm{I}(2_{5}^{-1} 3^{-1})$", 4)
        assert plain == latex
        assert plain.determinant == 6
        assert not plain.is_even

    def test_even_det_five(self):
        """II(5^{+1}) is an even genus of determinant 5."""
        symbol = parse_symbol("II(5^{+1})", 4)
        assert symbol.is_even
        assert symbol.determinant == 5

    def test_malformed_token(self):
        """Unknown characters are a syntax error."""
        with pytest.raises(SymbolSyntaxError, match="malformed"):
            parse_symbol("I(2_5^{-1}x)", 4)

    def test_dyadic_factor_needs_subscript(self):
        """A power of 2 without parity subscript is rejected."""
        with pytest.raises(SymbolSyntaxError, match="subscript"):
            parse_symbol("I(2^{-1})", 4)

    def test_dimensions_exceed_rank(self):
        """Constituent dimensions beyond the rank are inconsistent."""
        with pytest.raises(InconsistentDimensionError):
            parse_symbol("I(3^{+5})", 4)

    def test_nonexistent_genus(self):
        """There is no even rank-4 lattice of determinant 3."""
        with pytest.raises(NonexistentGenusError):
            parse_symbol("II(3^{+1})", 4)


# =============================================================================
# Square free predicates
# =============================================================================


class TestSquareFree:
    """Tests for is_square_free and is_strongly_square_free."""

    def test_unimodular(self, identity_n):
        """Unimodular genera are strongly square free."""
        symbol = genus_symbol(identity_n(3))
        assert is_square_free(symbol)
        assert is_strongly_square_free(symbol)

    def test_large_modular_part(self):
        """diag(1,3,3) is square free but its 3-modular part is too large."""
        symbol = genus_symbol(GramLattice.diagonal(1, 3, 3))
        assert is_square_free(symbol)
        assert not is_strongly_square_free(symbol)

    def test_scale_two_block(self):
        """A 9-modular constituent is not square free."""
        assert not is_square_free(genus_symbol(GramLattice.diagonal(1, 1, 9)))

    def test_enumerate_unimodular(self, identity_n):
        """Z^3 and Z^4 are the only unimodular genera in ranks 3 and 4."""
        assert enumerate_symbols(3, 1) == [genus_symbol(identity_n(3))]
        assert enumerate_symbols(4, 1) == [genus_symbol(identity_n(4))]

    def test_enumerate_det_five(self):
        """Every enumerated symbol exists, is primitive and has the asked determinant."""
        symbols = enumerate_symbols(4, 5)
        assert parse_symbol("II(5^{+1})", 4) in symbols
        for symbol in symbols:
            assert symbol.determinant == 5
            assert exists(symbol)
            assert is_primitive_symbol(symbol)
            assert is_strongly_square_free(symbol)


# =============================================================================
# Determinant shapes
# =============================================================================


class TestDetShape:
    """Tests for DetShape."""

    def test_parse_factorization(self):
        """A factorization string gives squared and simple primes."""
        shape = DetShape.parse("3^2*5*7")
        assert shape.squared == (3,)
        assert shape.simple == (5, 7)
        assert shape.determinant == 315
        assert shape.big_omega == 4
        assert str(shape) == "3^2*5*7"

    def test_parse_determinant(self):
        """A plain integer is factored."""
        assert DetShape.parse("1155") == DetShape(simple=(3, 5, 7, 11))
        assert str(DetShape.parse("1")) == "1"

    def test_sorted(self):
        """Prime tuples are kept sorted."""
        assert DetShape(simple=(7, 3)).simple == (3, 7)

    def test_cube_rejected(self):
        """Exponents above 2 are outside every shape."""
        with pytest.raises(InconsistentDimensionError):
            DetShape.from_determinant(8)
        with pytest.raises(SymbolSyntaxError):
            DetShape.parse("3^3")

    def test_repeated_prime(self):
        """A prime cannot be both squared and simple."""
        with pytest.raises(InconsistentDimensionError):
            DetShape(squared=(3,), simple=(3,))

    def test_composite(self):
        """Entries must be prime."""
        with pytest.raises(NotPrimeError):
            DetShape(simple=(9,))

    def test_valid_for(self):
        """Squared primes only occur in dimension 4."""
        shape = DetShape(squared=(3,), simple=(5,))
        assert shape.valid_for(4)
        assert not shape.valid_for(3)
        assert DetShape(simple=(5,)).valid_for(3)

    def test_symbol_shape(self):
        """GenusSymbol.shape reads the determinant."""
        assert parse_symbol("II(3^{-2}5^{+1})", 4).shape() == DetShape(squared=(3,), simple=(5,))


# =============================================================================
# Partial duals and Watson transformations
# =============================================================================


class TestPartialDual:
    """Tests for partial_dual and partial_dual_symbol."""

    def test_self_dual_at_three(self, a2):
        """A2 at 3 swaps two one-dimensional constituents."""
        g = genus_symbol(a2)
        assert partial_dual_symbol(g, 3) == g
        assert genus_symbol(partial_dual(a2, 3)) == g

    def test_coprime_prime_rescales(self, identity_n):
        """For p not dividing det, D_p(L) = ^p L."""
        lattice = identity_n(3)
        image = partial_dual(lattice, 3)
        assert image.determinant == 27
        assert genus_symbol(image) == partial_dual_symbol(genus_symbol(lattice), 3)
        assert primitive_symbol(partial_dual_symbol(genus_symbol(lattice), 3)) == genus_symbol(
            lattice
        )

    def test_swaps_dimensions(self):
        """(dim L_0, dim L_1) = (3, 1) becomes (1, 3) at p."""
        image = partial_dual_symbol(parse_symbol("II(5^{+1})", 4), 5)
        at5 = image.local(5)
        assert [(c.scale_exp, c.dim) for c in at5.constituents] == [(0, 1), (1, 3)]

    def test_involution_after_primitive(self):
        """Applying D_p twice returns the genus."""
        g = parse_symbol("I(3^{+1}5^{-1})", 4)
        twice = partial_dual_symbol(partial_dual_symbol(g, 3), 3)
        assert primitive_symbol(twice) == g

    def test_commute_at_distinct_primes(self):
        """Partial duals at different primes commute."""
        g = parse_symbol("I(3^{+1}5^{-1})", 4)
        assert partial_dual_symbol(partial_dual_symbol(g, 3), 5) == partial_dual_symbol(
            partial_dual_symbol(g, 5), 3
        )


class TestWatson:
    """Tests for watson, watson_symbol and watson_preimages."""

    def test_identity_on_square_free(self, a2):
        """E_p fixes square free genera."""
        g = genus_symbol(a2)
        assert watson_symbol(g, 3) == g

    def test_collapses_scale_two(self, identity_n):
        """diag(1,1,1,25) at 5 goes to Z^4."""
        lattice = GramLattice.diagonal(1, 1, 1, 25)
        assert watson_symbol(genus_symbol(lattice), 5) == genus_symbol(identity_n(4))
        assert watson(lattice, 5).determinant == 1

    def test_lattice_level_scaled(self, a2):
        """E_3(^9 A2) is A2."""
        scaled = GramLattice(tuple(tuple(9 * x for x in row) for row in a2.gram))
        image = watson(scaled, 3)
        assert image.determinant == 3
        assert genus_symbol(image) == genus_symbol(a2)

    def test_preimages_of_identity(self, identity_n):
        """Pre-images of Z^4 at 5 have determinant 5^(2k) with k in 1..3."""
        g = genus_symbol(identity_n(4))
        preimages = watson_preimages(g, 5)
        assert preimages
        exponents = {valuation(k.determinant, 5) for k in preimages}
        assert exponents <= {2, 4, 6}
        assert 2 in exponents
        for k in preimages:
            assert watson_symbol(k, 5) == g
            assert is_primitive_symbol(k)
            assert exists(k)
        assert genus_symbol(GramLattice.diagonal(1, 1, 1, 25)) in preimages

    def test_preimage_dim_cap(self, identity_n):
        """dim_cap=1 keeps only determinant 25."""
        preimages = watson_preimages(genus_symbol(identity_n(4)), 5, dim_cap=1)
        assert {k.determinant for k in preimages} == {25}

    def test_preimages_round_trip_at_prime_of_det(self):
        """Pre-images at a prime dividing det map back to the genus."""
        g = parse_symbol("I(3^{+1}5^{-1})", 4)
        for k in watson_preimages(g, 3, dim_cap=2):
            assert watson_symbol(k, 3) == g
            assert k != g
