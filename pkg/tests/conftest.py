"""Pytest configuration and fixtures for Reflective Genera tests."""

import pytest

from reflective_genera.lattice import GramLattice
from reflective_genera.utils.cache import clear_all_caches

A2_GRAM = ((2, -1), (-1, 2))
D4_GRAM = (
    (2, 0, -1, 0),
    (0, 2, -1, 0),
    (-1, -1, 2, -1),
    (0, 0, -1, 2),
)


@pytest.fixture(autouse=True)
def fresh_caches():
    """Start every test with empty memo caches."""
    clear_all_caches()
    yield
    clear_all_caches()


@pytest.fixture
def identity_n():
    """Factory for the standard lattice Z^n."""
    return GramLattice.identity


@pytest.fixture
def a2() -> GramLattice:
    """The hexagonal lattice A2."""
    return GramLattice(A2_GRAM)


@pytest.fixture
def d4() -> GramLattice:
    """The root lattice D4."""
    return GramLattice(D4_GRAM)


@pytest.fixture
def scaled_a2() -> GramLattice:
    """A2 rescaled by 3, which is not primitive."""
    return GramLattice(tuple(tuple(3 * x for x in row) for row in A2_GRAM))
