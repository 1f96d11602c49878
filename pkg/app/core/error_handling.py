# core/error_handling.py
"""
Exception hierarchy, logging setup and timing helpers shared by every
thermaleq module.
"""

import logging
import time
from functools import wraps
from typing import Any, Dict, Optional

from config.constants import SLOW_OPERATION_S

logger = logging.getLogger(__name__)

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'

# ============================================================
# CUSTOM EXCEPTIONS
# ============================================================

class ThermalEqError(Exception):
    """Base exception for thermaleq."""
    pass

class ValidationError(ThermalEqError):
    """Raised when a model description or config violates its invariants."""
    pass

class CapacityError(ThermalEqError):
    """Raised when the composite dimension exceeds the configured cap."""
    pass

class DomainError(ThermalEqError, ValueError):
    """Raised when an input lies outside an operation's domain."""
    pass

class PoleCollisionError(DomainError):
    """Raised when a function is evaluated at (or too close to) one of its poles."""
    pass

class BasisIndexError(ThermalEqError, IndexError):
    """Raised for out-of-range system levels or bath indices."""
    pass

class ShapeError(ThermalEqError, ValueError):
    """Raised when matrix dimensions do not match the product space."""
    pass

class ConsistencyError(ThermalEqError):
    """Raised when derived structures disagree with the data they came from."""
    pass

class ConditioningError(ThermalEqError):
    """Raised when a numerical limit fails to converge."""

    def __init__(self, message: str, diagnostics: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}

# ============================================================
# LOGGING
# ============================================================

def configure_logging(level: str = "INFO", log_file: Optional[str] = None) -> None:
    """
    Install the console handler (and a file handler when asked) on the root
    logger. Called once by the CLI; library code only creates loggers.
    """
    handlers = [logging.StreamHandler()]
    if log_file:
        handlers.append(logging.FileHandler(log_file))

    logging.basicConfig(
        level=getattr(logging, level.upper(), logging.INFO),
        format=LOG_FORMAT,
        handlers=handlers,
        force=True,
    )

# ============================================================
# PERFORMANCE MONITORING
# ============================================================

def log_performance(func):
    """
    Decorator to log function performance.
    """
    @wraps(func)
    def wrapper(*args, **kwargs):
        start = time.perf_counter()
        result = func(*args, **kwargs)
        elapsed = time.perf_counter() - start

        if elapsed > SLOW_OPERATION_S:
            logger.warning(f"Slow operation: {func.__name__} took {elapsed:.2f}s")
        else:
            logger.debug(f"{func.__name__} completed in {elapsed:.3f}s")

        return result
    return wrapper
