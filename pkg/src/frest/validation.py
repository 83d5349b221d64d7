"""Input validation helpers."""

import numpy as np

from .exceptions import InvalidInputError, InvalidParameterError


def check_finite(a, name="array"):
    if not np.all(np.isfinite(a)):
        raise InvalidInputError(f"{name} contains non-finite values")
    return a


def check_signal(y, name="signal"):
    """Return ``y`` as a finite float64 T x N matrix."""
    y = np.asarray(y)
    if np.iscomplexobj(y):
        raise InvalidInputError(f"{name} must be real-valued")
    y = y.astype(np.float64, copy=False)
    if y.ndim != 2:
        raise InvalidInputError(f"{name} must be 2-D (T x N), got shape {y.shape}")
    if y.shape[0] < 1 or y.shape[1] < 1:
        raise InvalidInputError(f"{name} must have T >= 1 and N >= 1, got {y.shape}")
    return check_finite(y, name)


def check_batch(y, name="batch"):
    """Accept a single T x N matrix or a stack of shape (M, T, N)."""
    y = np.asarray(y, dtype=np.float64)
    if y.ndim not in (2, 3) or 0 in y.shape:
        raise InvalidInputError(f"{name} must be (T, N) or (M, T, N), got {y.shape}")
    return check_finite(y, name)


def check_same_shape(a, b, names=("y_true", "y_pred")):
    if np.shape(a) != np.shape(b):
        raise InvalidInputError(
            f"shape mismatch: {names[0]} {np.shape(a)} vs {names[1]} {np.shape(b)}")


def check_symmetric(a, tol=1e-10, name="matrix"):
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise InvalidInputError(f"{name} must be square, got shape {a.shape}")
    check_finite(a, name)
    if a.size and np.max(np.abs(a - a.T)) > tol:
        raise InvalidInputError(f"{name} is not symmetric within {tol}")
    return a


def check_in_range(value, name, low=None, high=None, low_open=False, high_open=False):
    if not np.isfinite(value):
        raise InvalidParameterError(f"{name} must be finite, got {value}")
    if low is not None and (value < low or (low_open and value == low)):
        raise InvalidParameterError(f"{name}={value} below admissible range")
    if high is not None and (value > high or (high_open and value == high)):
        raise InvalidParameterError(f"{name}={value} above admissible range")
    return value


def check_positive_int(value, name):
    if int(value) != value or value < 1:
        raise InvalidParameterError(f"{name} must be a positive integer, got {value}")
    return int(value)
