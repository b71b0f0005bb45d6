"""Input validation helpers shared across the package."""

from __future__ import annotations

import numpy as np


def as_rng(seed=None) -> np.random.Generator:
    """Coerce ``seed`` (None, int, SeedSequence, or Generator) to a Generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def as_float_matrix(X, name="X") -> np.ndarray:
    """Coerce to a 2D float64 array with finite entries; 1D input becomes a column."""
    arr = np.asarray(X, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 1D or 2D, got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"{name} must be non-empty, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def as_int_vector(x, name="x") -> np.ndarray:
    arr = np.asarray(x)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be 1D, got shape {arr.shape}")
    out = arr.astype(np.int64)
    if not np.array_equal(out, arr):
        raise ValueError(f"{name} must be integer-valued")
    return out


def check_positive(value, name="value") -> float:
    value = float(value)
    if not np.isfinite(value) or value <= 0:
        raise ValueError(f"{name} must be a positive finite number, got {value}")
    return value


def check_simplex(vec, tol=1e-9, name="vector") -> np.ndarray:
    vec = np.asarray(vec, dtype=np.float64)
    if vec.ndim != 1:
        raise ValueError(f"{name} must be 1D")
    if np.any(vec < -tol):
        raise ValueError(f"{name} has negative entries")
    if abs(vec.sum() - 1.0) > tol:
        raise ValueError(f"{name} does not sum to 1 (sum={vec.sum()!r})")
    return vec


def check_row_stochastic(mat, tol=1e-9, name="matrix") -> np.ndarray:
    mat = np.asarray(mat, dtype=np.float64)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise ValueError(f"{name} must be square")
    if np.any(mat < -tol):
        raise ValueError(f"{name} has negative entries")
    if np.any(np.abs(mat.sum(axis=1) - 1.0) > tol):
        raise ValueError(f"{name} rows do not sum to 1")
    return mat


def check_symmetric(mat, tol=1e-10, name="matrix") -> np.ndarray:
    mat = np.asarray(mat, dtype=np.float64)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise ValueError(f"{name} must be square")
    if np.max(np.abs(mat - mat.T), initial=0.0) > tol:
        raise ValueError(f"{name} is not symmetric within {tol}")
    return 0.5 * (mat + mat.T)


def check_spd(mat, tol=1e-10, name="matrix") -> np.ndarray:
    """Validate symmetry and positive definiteness (via Cholesky)."""
    sym = check_symmetric(mat, tol=tol, name=name)
    try:
        np.linalg.cholesky(sym)
    except np.linalg.LinAlgError:
        raise ValueError(f"{name} is not positive definite") from None
    return sym
