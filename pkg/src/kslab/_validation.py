"""Small argument checks shared across modules."""

import math

import numpy as np

from .exceptions import DomainError


def check_positive(name, value, strict=True):
    value = float(value)
    if not math.isfinite(value) or (value <= 0 if strict else value < 0):
        rel = ">" if strict else ">="
        raise DomainError(f"{name} must be finite and {rel} 0, got {value!r}")
    return value


def check_open_interval(name, value, lo, hi):
    value = float(value)
    if not (lo < value < hi):
        raise DomainError(f"{name} must lie in ({lo}, {hi}), got {value!r}")
    return value


def check_field(name, array, shape):
    """Return ``array`` as a float64 array of ``shape`` with finite entries."""
    arr = np.asarray(array, dtype=np.float64)
    if arr.shape != tuple(shape):
        if arr.size == int(np.prod(shape)):
            arr = arr.reshape(shape)
        else:
            raise DomainError(f"{name} has shape {arr.shape}, expected {tuple(shape)}")
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} contains non-finite values")
    return arr
