"""Array validation helpers shared by the estimators and the CV harness."""

from __future__ import annotations

import numpy as np


def check_matrix(X, name: str = "X", n_cols: int | None = None) -> np.ndarray:
    """Coerce to a finite 2-D float64 array, copying only when needed."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError(f"{name} must be 2-dimensional, got shape {X.shape}")
    if X.shape[0] == 0:
        raise ValueError(f"{name} must contain at least one row")
    if not np.all(np.isfinite(X)):
        raise ValueError(f"{name} contains non-finite values")
    if n_cols is not None and X.shape[1] != n_cols:
        raise ValueError(f"{name} must have {n_cols} columns, got {X.shape[1]}")
    return X


def check_vector(y, name: str = "y", length: int | None = None) -> np.ndarray:
    y = np.asarray(y, dtype=np.float64)
    if y.ndim != 1:
        raise ValueError(f"{name} must be 1-dimensional, got shape {y.shape}")
    if not np.all(np.isfinite(y)):
        raise ValueError(f"{name} contains non-finite values")
    if length is not None and len(y) != length:
        raise ValueError(f"{name} must have length {length}, got {len(y)}")
    return y


def check_paired(X: np.ndarray, Y: np.ndarray, x_name: str = "X", y_name: str = "Y"):
    if X.shape[0] != Y.shape[0]:
        raise ValueError(
            f"{x_name} and {y_name} disagree on sample count: "
            f"{X.shape[0]} vs {Y.shape[0]}"
        )
