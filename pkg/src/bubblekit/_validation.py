"""Input validation helpers shared by the estimators and test functions."""
from __future__ import annotations

import numpy as np


class DataError(ValueError):
    """Input data violates a documented precondition (bad file, bad column, bad shape)."""


class NumericError(ArithmeticError):
    """A numerical procedure failed (singular matrix, non-convergence, non-finite value)."""


def as_1d(x, name: str = "x", min_len: int = 1) -> np.ndarray:
    """Return ``x`` as a finite float64 vector of length ``>= min_len``."""
    arr = np.asarray(getattr(x, "values", x), dtype=float)
    if arr.ndim != 1:
        arr = arr.reshape(-1) if arr.ndim == 2 and 1 in arr.shape else arr
    if arr.ndim != 1:
        raise DataError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if arr.shape[0] < min_len:
        raise DataError(f"{name} needs at least {min_len} observations, got {arr.shape[0]}")
    if not np.all(np.isfinite(arr)):
        raise DataError(f"{name} contains non-finite values")
    return arr


def as_2d(X, name: str = "X", min_rows: int = 1) -> np.ndarray:
    arr = np.asarray(X, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise DataError(f"{name} must be two-dimensional, got shape {arr.shape}")
    if arr.shape[0] < min_rows:
        raise DataError(f"{name} needs at least {min_rows} rows, got {arr.shape[0]}")
    if not np.all(np.isfinite(arr)):
        raise DataError(f"{name} contains non-finite values")
    return arr


def check_binary(y, name: str = "y") -> np.ndarray:
    arr = as_1d(y, name)
    if not np.all((arr == 0) | (arr == 1)):
        raise DataError(f"{name} must contain only 0/1 values")
    return arr


def check_level(alpha: float, name: str = "alpha") -> float:
    alpha = float(alpha)
    if not 0.0 < alpha < 1.0:
        raise DataError(f"{name} must lie in (0, 1), got {alpha}")
    return alpha


def rng_for(seed: int, *index: int) -> np.random.Generator:
    """Independent generator for replication ``index`` under master ``seed``.

    Streams depend only on ``(seed, *index)``, so results do not depend on the
    order or the number of workers used to run replications.
    """
    return np.random.default_rng([int(seed), *map(int, index)])
