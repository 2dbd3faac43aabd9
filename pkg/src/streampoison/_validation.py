"""Input validation helpers.

Small checks shared by the public entry points. Hot inner loops validate once
up front and then trust their arrays.
"""

from __future__ import annotations

import numbers

import numpy as np

# Non-strict feasibility comparisons get this much relative slack so that
# boundary points survive float round-off (||[0.6, 0.8]|| is 1 + 2.2e-16).
BOUNDARY_RTOL = 1e-12


def leq(a: float, b: float) -> bool:
    """a <= b up to BOUNDARY_RTOL relative slack."""
    return a <= b + BOUNDARY_RTOL * max(1.0, abs(b))


def as_vector(x, dim: int | None = None, name: str = "x") -> np.ndarray:
    """Coerce to a 1-D float64 array, optionally checking its length."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be 1-D, got shape {arr.shape}")
    if dim is not None and arr.shape[0] != dim:
        raise ValueError(f"{name} has dimension {arr.shape[0]}, expected {dim}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def as_matrix(X, dim: int | None = None, name: str = "X") -> np.ndarray:
    """Coerce to a 2-D float64 array of shape (n, d)."""
    arr = np.asarray(X, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {arr.shape}")
    if dim is not None and arr.shape[1] != dim:
        raise ValueError(f"{name} has {arr.shape[1]} columns, expected {dim}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def check_label(y, name: str = "y") -> int:
    """Accept only the labels +1 and -1."""
    if isinstance(y, numbers.Integral) or (isinstance(y, np.generic) and np.issubdtype(type(y), np.number)):
        yi = int(y)
        if yi in (1, -1):
            return yi
    raise ValueError(f"{name} must be +1 or -1, got {y!r}")


def check_labels(y, n: int | None = None, name: str = "y") -> np.ndarray:
    """Coerce to a 1-D int array with entries in {-1, +1}."""
    arr = np.asarray(y)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be 1-D, got shape {arr.shape}")
    if n is not None and arr.shape[0] != n:
        raise ValueError(f"{name} has length {arr.shape[0]}, expected {n}")
    arr = arr.astype(np.int64, copy=False)
    if arr.size and not np.all(np.isin(arr, (-1, 1))):
        bad = arr[~np.isin(arr, (-1, 1))][0]
        raise ValueError(f"{name} must contain only +1/-1, found {bad}")
    return arr


def check_positive(value: float, name: str) -> float:
    value = float(value)
    if not np.isfinite(value) or value <= 0:
        raise ValueError(f"{name} must be a positive finite number, got {value}")
    return value


def as_rng(seed) -> np.random.Generator:
    """Accept a Generator, a seed, or None (fresh entropy)."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)
