"""Reflective Genera - classification of totally-reflective genera of definite lattices."""

__version__ = "0.1.0"
