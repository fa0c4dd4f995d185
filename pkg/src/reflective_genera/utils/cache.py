"""Bounded memo caches for expensive pure computations."""

import functools
import hashlib
import json
import logging
import os
import threading
from collections import OrderedDict
from collections.abc import Callable
from dataclasses import dataclass, field
from typing import Any, Generic, ParamSpec, TypeVar

logger = logging.getLogger(__name__)

T = TypeVar("T")
P = ParamSpec("P")
R = TypeVar("R")


@dataclass
class CacheStats:
    """Statistics for cache performance monitoring."""

    hits: int = 0
    misses: int = 0
    evictions: int = 0

    @property
    def hit_rate(self) -> float:
        """Return cache hit rate as a percentage."""
        total = self.hits + self.misses
        return (self.hits / total * 100) if total > 0 else 0.0

    def reset(self) -> None:
        """Reset all statistics."""
        self.hits = 0
        self.misses = 0
        self.evictions = 0


@dataclass
class MemoCache(Generic[T]):
    """
    Size-bounded memo cache for pure functions.

    Reads and writes go through one lock, so concurrent workers see either no
    entry or a complete one, and a key is computed once even when several
    threads ask for it at the same time.
    """

    name: str = "memo"
    max_entries: int = 4096
    _cache: OrderedDict[str, T] = field(default_factory=OrderedDict)
    _lock: threading.RLock = field(default_factory=threading.RLock)
    _stats: CacheStats = field(default_factory=CacheStats)

    @property
    def stats(self) -> CacheStats:
        """Return cache statistics."""
        return self._stats

    @property
    def size(self) -> int:
        """Return current number of cached entries."""
        return len(self._cache)

    def get(self, key: str) -> T | None:
        """Get cached value, or None when absent."""
        with self._lock:
            if key not in self._cache:
                self._stats.misses += 1
                return None
            self._stats.hits += 1
            return self._cache[key]

    def set(self, key: str, value: T) -> None:
        """Store a value, evicting the oldest entry when full."""
        with self._lock:
            if key not in self._cache and len(self._cache) >= self.max_entries:
                self._cache.popitem(last=False)
                self._stats.evictions += 1
            self._cache[key] = value

    def get_or_set(self, key: str, factory: Callable[[], T]) -> T:
        """Get cached value or compute and cache it (first write serialized)."""
        with self._lock:
            if key in self._cache:
                self._stats.hits += 1
                return self._cache[key]
            self._stats.misses += 1
            value = factory()
            self.set(key, value)
            return value

    def clear(self) -> None:
        """Clear all cached entries."""
        with self._lock:
            count = len(self._cache)
            self._cache.clear()
            self._stats.evictions += count


def make_cache_key(*args: Any, **kwargs: Any) -> str:
    """Create a cache key from function arguments."""
    key_data = {
        "args": [repr(a) for a in args],
        "kwargs": {k: repr(v) for k, v in sorted(kwargs.items())},
    }
    key_str = json.dumps(key_data, sort_keys=True)
    return hashlib.md5(key_str.encode(), usedforsecurity=False).hexdigest()


def memoized(
    cache: MemoCache[Any],
    key_prefix: str = "",
) -> Callable[[Callable[P, R]], Callable[P, R]]:
    """
    Decorator to memoize a pure function.

    Arguments must have a stable ``repr``.

    Usage:
        @memoized(mass_cache, key_prefix="mass")
        def mass(symbol: GenusSymbol) -> Fraction:
            ...
    """

    def decorator(func: Callable[P, R]) -> Callable[P, R]:
        @functools.wraps(func)
        def wrapper(*args: P.args, **kwargs: P.kwargs) -> R:
            cache_key = f"{key_prefix}:{make_cache_key(*args, **kwargs)}"
            result: R = cache.get_or_set(cache_key, lambda: func(*args, **kwargs))
            return result

        return wrapper

    return decorator


_cache_size = int(os.environ.get("REFLECTIVE_GENERA_CACHE_SIZE", "4096"))

# Global caches for the expensive pure computations
bernoulli_cache: MemoCache[Any] = MemoCache(name="bernoulli", max_entries=_cache_size)
mass_cache: MemoCache[Any] = MemoCache(name="mass", max_entries=_cache_size)
canonical_cache: MemoCache[Any] = MemoCache(name="canonical", max_entries=_cache_size)
automorphism_cache: MemoCache[Any] = MemoCache(name="automorphism", max_entries=_cache_size)
forms_cache: MemoCache[Any] = MemoCache(name="forms", max_entries=_cache_size)
bounds_cache: MemoCache[Any] = MemoCache(name="bounds", max_entries=_cache_size)

_ALL_CACHES = (
    bernoulli_cache, mass_cache, canonical_cache, automorphism_cache, forms_cache, bounds_cache
)


def clear_all_caches() -> None:
    """Clear all caches."""
    for cache in _ALL_CACHES:
        cache.clear()
    logger.debug("Cleared all caches")


def get_cache_stats() -> dict[str, dict[str, Any]]:
    """Get statistics for all caches."""
    return {
        f"{cache.name}_cache": {
            "size": cache.size,
            "hits": cache.stats.hits,
            "misses": cache.stats.misses,
            "hit_rate": f"{cache.stats.hit_rate:.1f}%",
        }
        for cache in _ALL_CACHES
    }
