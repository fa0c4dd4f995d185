"""Error handling utilities for Reflective Genera."""

import logging
from collections.abc import Awaitable, Callable
from functools import wraps
from typing import Any, ParamSpec, TypeVar

logger = logging.getLogger(__name__)

P = ParamSpec("P")
T = TypeVar("T")


class ReflectiveGeneraError(Exception):
    """Base class for all domain errors."""

    pass


# =============================================================================
# Lattices
# =============================================================================


class LatticeError(ReflectiveGeneraError):
    """Raised when a Gram matrix is not square, symmetric, integral or definite."""

    pass


class InvalidScaleError(ReflectiveGeneraError):
    """Raised when a lattice is rescaled by zero."""

    pass


class NotPrimeError(ReflectiveGeneraError):
    """Raised when a local operation receives a non-prime modulus."""

    pass


# =============================================================================
# Genus symbols
# =============================================================================


class SymbolError(ReflectiveGeneraError):
    """Base class for genus symbol errors."""

    pass


class SymbolSyntaxError(SymbolError):
    """Raised on a malformed token in a genus symbol string."""

    pass


class InconsistentDimensionError(SymbolError):
    """Raised when constituent dimensions do not add up to the rank."""

    pass


class NonexistentGenusError(SymbolError):
    """Raised when a symbol fails the global existence conditions."""

    pass


# =============================================================================
# Computations
# =============================================================================


class MassConsistencyError(ReflectiveGeneraError):
    """Raised when transcendental parts of the mass do not cancel."""

    pass


class RootClassificationError(ReflectiveGeneraError):
    """Raised when a root component matches no irreducible type."""

    pass


class UnknownWeylClassError(ReflectiveGeneraError):
    """Raised for a (dimension, class) pair missing from the order tables."""

    pass


class BudgetExhaustedError(ReflectiveGeneraError):
    """Raised when a search stops before reaching its goal."""

    pass


class CertificateError(ReflectiveGeneraError):
    """Raised when enumerated classes exceed the mass of their genus."""

    pass


class BoundWitnessError(ReflectiveGeneraError):
    """Raised when a witness ratio contradicts a prime count bound."""

    pass


class DeterminantCapError(ReflectiveGeneraError):
    """Raised when the Watson closure grows past its determinant cap."""

    pass


class WatsonRoundTripError(ReflectiveGeneraError):
    """Raised when a Watson pre-image does not map back to the genus it came from."""

    pass


def safe_tool_handler(
    fallback_factory: Callable[[], T],
) -> Callable[[Callable[P, Awaitable[T]]], Callable[P, Awaitable[T]]]:
    """
    Decorator to wrap tool handlers with error handling.

    Args:
        fallback_factory: Callable that returns fallback value on error

    Returns:
        Decorated function with error handling
    """

    def decorator(func: Callable[P, Awaitable[T]]) -> Callable[P, Awaitable[T]]:
        @wraps(func)
        async def wrapper(*args: P.args, **kwargs: P.kwargs) -> T:
            try:
                return await func(*args, **kwargs)
            except BudgetExhaustedError as e:
                logger.warning(f"Budget exhausted in {func.__name__}: {e}")
                return fallback_factory()
            except ReflectiveGeneraError as e:
                logger.error(f"{type(e).__name__} in {func.__name__}: {e}")
                return fallback_factory()
            except Exception as e:
                logger.exception(f"Unexpected error in {func.__name__}: {e}")
                return fallback_factory()

        return wrapper

    return decorator


def format_error_response(error: str, details: str | None = None) -> dict[str, Any]:
    """
    Format an error response for MCP tool output.

    Args:
        error: Short error message
        details: Optional detailed information

    Returns:
        Dict with error information
    """
    response: dict[str, Any] = {
        "success": False,
        "error": error,
    }
    if details:
        response["details"] = details
    return response
