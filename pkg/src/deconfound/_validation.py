"""Input validation helpers used by the estimators and data containers."""
from __future__ import annotations

import numpy as np

from .errors import NumericsError, ValidationError


def as_float_array(x, name: str, ndim: int | None = None) -> np.ndarray:
    """Coerce to a contiguous float64 array, optionally enforcing ndim."""
    arr = np.ascontiguousarray(x, dtype=np.float64)
    if ndim is not None and arr.ndim != ndim:
        raise ValidationError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    return arr


def check_finite(arr: np.ndarray, name: str) -> np.ndarray:
    if not np.isfinite(arr).all():
        raise NumericsError(f"{name} contains NaN or Inf")
    return arr


def check_positive(value, name: str):
    if not value > 0:
        raise ValidationError(f"{name} must be > 0, got {value}")
    return value


def check_in_unit_interval(value, name: str):
    if not 0.0 <= value <= 1.0:
        raise ValidationError(f"{name} must lie in [0, 1], got {value}")
    return value


def check_lengths_match(a, b, name_a: str, name_b: str):
    if len(a) != len(b):
        raise ValidationError(f"{name_a} and {name_b} must have equal length, got {len(a)} vs {len(b)}")


def check_nonempty(x, name: str):
    if len(x) == 0:
        raise ValidationError(f"{name} must not be empty")
    return x
