"""
Utility functions for the bandlimit lab.

This module provides shared functionality used across the numerical modules
and the command-line harness, including:
- The exception hierarchy and its exit codes
- JSON sanitization for numpy-valued results
- Thread fan-out for per-level computations
- Content digests for the run manifest
"""

import asyncio
import hashlib
import json
import logging
import math
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Awaitable, Callable, Dict, Iterable, List, TypeVar, Union

import numpy as np

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")


class LabError(Exception):
    """Base class for every failure the lab reports to the caller."""

    exit_code = 1


class ConfigError(LabError):
    """Configuration file, flag or manifold string could not be parsed."""

    exit_code = 2


class InvalidParameterError(LabError, ValueError):
    """A module precondition was violated by its arguments."""

    exit_code = 3


class UnimplementedManifoldError(LabError):
    """The manifold is recognized but has no closed-form eigendata here."""

    exit_code = 4


class RadiusTooLargeError(LabError, ValueError):
    """Geodesic ball radius lies outside the closed-form regime."""

    exit_code = 5


class SingularConfigurationError(LabError):
    """Point configuration makes a Gram or Vandermonde matrix singular."""

    exit_code = 6


class NumericalIntegrityError(LabError):
    """A computed quantity violates a range it must satisfy exactly."""

    exit_code = 7


class EnlargeCandidatesError(LabError):
    """Greedy node selection found dependent rows in the candidate set."""

    exit_code = 8


class BandwidthTooSmallError(LabError, ValueError):
    """Derived bandwidth fell below 1."""

    exit_code = 9


class MissingLevelError(LabError, KeyError):
    """A family lacks a level required by the computation."""

    exit_code = 10

    def __str__(self) -> str:
        # KeyError quotes its argument otherwise
        return str(self.args[0]) if self.args else ""


EXIT_CODES: Dict[str, int] = {
    cls.__name__: cls.exit_code
    for cls in (
        LabError,
        ConfigError,
        InvalidParameterError,
        UnimplementedManifoldError,
        RadiusTooLargeError,
        SingularConfigurationError,
        NumericalIntegrityError,
        EnlargeCandidatesError,
        BandwidthTooSmallError,
        MissingLevelError,
    )
}


def sanitize_json(data: Any) -> Dict[str, Any]:
    """
    Ensure data is JSON-serializable, converting numpy values on the way.

    Non-finite floats become None so that no NaN or Infinity reaches disk.

    Args:
        data: Input dictionary to sanitize

    Returns:
        Dict containing JSON-safe data

    Raises:
        ValueError: If data cannot be converted to JSON-safe format
    """

    def _sanitize(obj: Any) -> Any:
        if isinstance(obj, (bool, np.bool_)):
            return bool(obj)
        if isinstance(obj, (int, np.integer)):
            return int(obj)
        if isinstance(obj, (float, np.floating)):
            value = float(obj)
            return value if math.isfinite(value) else None
        if isinstance(obj, (str, type(None))):
            return obj
        if isinstance(obj, np.ndarray):
            return [_sanitize(item) for item in obj.tolist()]
        if isinstance(obj, (list, tuple)):
            return [_sanitize(item) for item in obj]
        if isinstance(obj, dict):
            return {str(k): _sanitize(v) for k, v in obj.items()}
        if isinstance(obj, Path):
            return str(obj)
        try:
            return str(obj)
        except Exception as e:
            logger.warning(f"Could not sanitize object of type {type(obj)}: {e}")
            return None

    try:
        if not isinstance(data, dict):
            raise ValueError("Input must be a dictionary")
        sanitized = _sanitize(data)
        json.dumps(sanitized, allow_nan=False)
        return sanitized
    except Exception as e:
        raise ValueError(f"Could not convert data to JSON-safe format: {e}")


def format_error(e: Exception) -> Dict[str, Union[str, int]]:
    """
    Format exception into a consistent machine-readable error structure.

    Args:
        e: Exception to format

    Returns:
        Dict containing error details and the process exit code
    """
    return {
        "error": str(e),
        "type": e.__class__.__name__,
        "exit_code": getattr(e, "exit_code", 1),
        "timestamp": datetime.now(timezone.utc).isoformat(),
    }


async def run_in_threads(func: Callable[[T], R], items: Iterable[T]) -> List[R]:
    """
    Apply a blocking function to each item on worker threads.

    Results come back in input order regardless of completion order.

    Args:
        func: Pure function to apply
        items: Inputs, one task each

    Returns:
        List of results aligned with items
    """
    tasks: List[Awaitable[R]] = [asyncio.to_thread(func, item) for item in items]
    if not tasks:
        return []
    return list(await asyncio.gather(*tasks))


def file_digest(path: Union[str, Path], chunk_size: int = 1 << 16) -> str:
    """Return the sha256 hex digest of a file's contents."""
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        while chunk := f.read(chunk_size):
            digest.update(chunk)
    return digest.hexdigest()


def format_float(value: float) -> str:
    """Shortest round-trip text for a float; empty for non-finite values."""
    value = float(value)
    if not math.isfinite(value):
        return ""
    return repr(value)
