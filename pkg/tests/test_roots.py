"""Tests for roots, root systems and Weyl group orders."""

import pytest

from reflective_genera.lattice import GramLattice
from reflective_genera.roots import (
    RootComponent,
    WeylOrderTable,
    component_weyl_order,
    is_reflective,
    is_root,
    root_norm_candidates,
    root_set,
    root_system,
    roots_of_norm,
    short_vectors,
    span_rank,
    weyl_order,
)
from reflective_genera.utils.errors import UnknownWeylClassError

# A binary form of determinant 11 with no roots at all.
ROOTLESS = GramLattice(((3, 1), (1, 4)))

# =============================================================================
# Vectors and roots
# =============================================================================


class TestShortVectors:
    """Tests for short vector enumeration."""

    def test_a2_minimal_vectors(self, a2):
        """A2 has three pairs of minimal vectors."""
        vectors = short_vectors(a2, 2)
        assert len(vectors) == 3
        assert all(norm == 2 for _, norm in vectors)

    def test_d4_minimal_vectors(self, d4):
        """D4 has twelve pairs of norm 2 vectors."""
        assert len(short_vectors(d4, 2)) == 12

    def test_bound_must_be_positive(self, a2):
        """A non-positive bound is rejected."""
        with pytest.raises(ValueError):
            short_vectors(a2, 0)


class TestRoots:
    """Tests for the root condition."""

    def test_is_root(self, identity_n):
        """In Z^2, e1 + e2 is a root; 2 e1 and e1 + 2 e2 are not."""
        z2 = identity_n(2)
        assert is_root(z2, (1, 1))
        assert is_root(z2, (1, 0))
        assert not is_root(z2, (2, 0))
        assert not is_root(z2, (1, 2))

    def test_zero_is_not_a_root(self, a2):
        """The zero vector is never a root."""
        assert not is_root(a2, (0, 0))

    def test_norm_candidates(self, a2, d4):
        """Root norms divide twice the discriminant exponent."""
        assert root_norm_candidates(d4) == [1, 2, 4]
        assert root_norm_candidates(a2) == [1, 2, 3, 6]

    def test_roots_come_in_pairs(self, d4):
        """Every root appears with its negative."""
        roots = set(roots_of_norm(d4, 2))
        assert len(roots) == 24
        assert all(r.negated() in roots for r in roots)

    def test_long_roots_of_a2(self, a2):
        """A2 has six roots of norm 6 besides its six norm 2 roots."""
        assert len(roots_of_norm(a2, 6)) == 6
        assert len(root_set(a2)) == 12

    def test_span_rank(self):
        """Rank over Q of a set of integer vectors."""
        assert span_rank([(1, 0, 0), (0, 1, 0), (1, 1, 0)]) == 2
        assert span_rank([]) == 0


# =============================================================================
# Root systems
# =============================================================================


class TestRootSystem:
    """Tests for root system classification."""

    def test_standard_lattices(self, identity_n):
        """Z^n has root system B_n with 2 n^2 roots."""
        for n, label in ((2, "B2^(1)"), (3, "B3^(1)"), (4, "B4^(1)")):
            report = root_system(identity_n(n))
            assert report.total_roots == 2 * n * n
            assert report.norm_counts == ((1, 2 * n), (2, 2 * n * (n - 1)))
            assert [c.label for c in report.components] == [label]
            assert report.reflective

    def test_a2_is_g2(self, a2):
        """Short and long roots of A2 form G2."""
        report = root_system(a2)
        assert [c.label for c in report.components] == ["G2^(3)"]
        assert report.total_roots == 12
        assert report.norm_counts == ((2, 6), (6, 6))
        assert report.norm_two_roots == 6

    def test_scaled_a2(self, scaled_a2):
        """Rescaling scales the root system."""
        assert [c.label for c in root_system(scaled_a2).components] == ["G2^(9)"]

    def test_d4_is_f4(self, d4):
        """D4 with its norm 4 roots gives F4."""
        report = root_system(d4)
        assert [c.label for c in report.components] == ["F4^(2)"]
        assert report.total_roots == 48
        assert report.norm_counts == ((2, 24), (4, 24))
        assert report.norm_two_roots == 24

    def test_decomposable(self, a2, identity_n):
        """Z + A2 splits into two components."""
        from reflective_genera.lattice import direct_sum

        report = root_system(direct_sum(identity_n(1), a2))
        assert sorted(c.label for c in report.components) == ["A1^(1/2)", "G2^(3)"]
        assert report.span_rank == 3

    def test_rootless_lattice(self):
        """A lattice without roots is not reflective."""
        report = root_system(ROOTLESS)
        assert report.total_roots == 0
        assert report.describe() == "empty, span 0/2, reflective=false, norm 2 roots 0"
        assert not is_reflective(ROOTLESS)

    def test_to_dict(self, d4):
        """The dictionary form carries the summary line."""
        data = root_system(d4).to_dict()
        assert data["reflective"] is True
        assert data["components"] == [{"type": "F4", "rank": 4, "scale": "2", "roots": 48}]
        assert data["roots_by_norm"] == {"2": 24, "4": 24}
        assert data["norm_two_roots"] == 24
        assert data["summary"] == "F4^(2), span 4/4, reflective=true, norm 2 roots 24"


# =============================================================================
# Weyl groups
# =============================================================================


class TestWeylOrder:
    """Tests for Weyl group orders."""

    def test_component_orders(self):
        """Classical formulas for |W|."""
        assert component_weyl_order(RootComponent("A", 2, 1, 6)) == 6
        assert component_weyl_order(RootComponent("B", 4, 1, 32)) == 384
        assert component_weyl_order(RootComponent("D", 4, 1, 24)) == 192
        assert component_weyl_order(RootComponent("G2", 2, 1, 12)) == 12

    def test_weyl_group_is_full_isometry_group(self, d4, identity_n):
        """For D4 and Z^4 the Weyl group is all of O(L)."""
        assert weyl_order(root_system(d4)) == 1152
        assert weyl_order(root_system(identity_n(4))) == 384

    def test_table_lookup(self):
        """Class labels may carry parentheses."""
        assert WeylOrderTable.lookup(4, "(l)") == 1152
        assert WeylOrderTable.lookup(2, "b") == 12
        assert WeylOrderTable.lookup(3, "(e)") == 48

    def test_unknown_class(self):
        """Unknown labels and dimensions raise UnknownWeylClassError."""
        with pytest.raises(UnknownWeylClassError):
            WeylOrderTable.lookup(3, "(z)")
        with pytest.raises(UnknownWeylClassError):
            WeylOrderTable.lookup(5, "a")
