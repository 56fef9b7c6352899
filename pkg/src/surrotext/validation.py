"""Small input-validation helpers shared across the package."""

from __future__ import annotations

import numpy as np


class ContractViolation(ValueError):
    """A documented precondition was not met by the caller."""


def require(condition: bool, message: str) -> None:
    if not condition:
        raise ContractViolation(message)


def check_finite(name: str, values) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise ContractViolation(f"{name} contains non-finite values")
    return arr


def check_positive_int(name: str, value) -> int:
    if not isinstance(value, (int, np.integer)) or isinstance(value, bool) or value <= 0:
        raise ContractViolation(f"{name} must be a positive integer, got {value!r}")
    return int(value)
