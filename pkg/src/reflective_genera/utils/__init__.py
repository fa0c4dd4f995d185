"""Shared utilities: errors and memo caches."""
