"""Input validation helpers shared by stores, the estimator, and the CLI."""
from __future__ import annotations

import numpy as np

from .errors import ZeroNormRowError

# Rows whose L2 norm deviates from 1.0 by no more than this are kept
# bit-identical; renormalizing them would only shuffle the last ulp and
# break bit-exact round-trips of already-normalized data.
NORM_SKIP_TOL = 1e-6

# Below this norm a row carries no direction and cannot be normalized.
ZERO_NORM_TOL = 1e-12


def check_matrix(x, *, name: str = "X", dtype=np.float32) -> np.ndarray:
    """Coerce to a 2-D contiguous array of `dtype` and reject non-finite values."""
    arr = np.asarray(x, dtype=dtype)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {arr.shape}")
    if arr.shape[1] == 0:
        raise ValueError(f"{name} must have at least one column")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return np.ascontiguousarray(arr)


def check_labels(y, n_classes: int, n_rows: int | None = None) -> np.ndarray:
    """Validate integer class labels in [0, n_classes)."""
    arr = np.asarray(y)
    if arr.ndim != 1:
        raise ValueError(f"labels must be 1-D, got shape {arr.shape}")
    if arr.size and not np.issubdtype(arr.dtype, np.integer):
        as_int = arr.astype(np.int64)
        if not np.array_equal(as_int, arr):
            raise ValueError("labels must be integers")
        arr = as_int
    arr = arr.astype(np.int64)
    if arr.size:
        if arr.min() < 0 or arr.max() >= n_classes:
            raise ValueError(
                f"labels must lie in [0, {n_classes}), got range "
                f"[{arr.min()}, {arr.max()}]"
            )
    if n_rows is not None and arr.shape[0] != n_rows:
        raise ValueError(f"expected {n_rows} labels, got {arr.shape[0]}")
    return arr


def normalize_rows(matrix: np.ndarray) -> np.ndarray:
    """Return `matrix` with unit-L2 rows.

    Norms are accumulated in float64. Rows already within NORM_SKIP_TOL of
    unit norm are passed through unchanged so normalization is idempotent at
    the bit level. Near-zero rows raise ZeroNormRowError.
    """
    norms = np.linalg.norm(matrix.astype(np.float64, copy=False), axis=1)
    if matrix.shape[0] and norms.min() < ZERO_NORM_TOL:
        bad = int(np.argmin(norms))
        raise ZeroNormRowError(f"row {bad} has norm {norms[bad]:.3e}")
    needs = np.abs(norms - 1.0) > NORM_SKIP_TOL
    if not needs.any():
        return matrix
    out = matrix.copy()
    scaled = matrix[needs].astype(np.float64) / norms[needs, None]
    out[needs] = scaled.astype(matrix.dtype)
    return out
