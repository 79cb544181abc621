"""Input checks shared by the estimator wrappers."""

from __future__ import annotations

import numpy as np
from sklearn.utils.validation import check_array

__all__ = ["check_sources", "check_profiles", "check_grid", "check_targets"]


def check_sources(X, min_radius: float = 1.0) -> np.ndarray:
    """Source positions as a float (R, 3) array, all outside the unit ball."""
    X = check_array(X, dtype=np.float64, ensure_min_samples=1)
    if X.shape[1] != 3:
        raise ValueError(f"source positions need 3 columns, got {X.shape[1]}")
    r = np.linalg.norm(X, axis=1)
    if np.any(r <= min_radius):
        raise ValueError(f"every source must lie outside radius {min_radius}; closest is at {r.min():.6g}")
    return X


def check_profiles(P, n_classes: int) -> np.ndarray:
    """One profile per row; a single 1D profile is promoted to a row."""
    P = np.asarray(P, dtype=float)
    if P.ndim == 1:
        P = P[None, :]
    P = check_array(P, dtype=np.float64)
    if P.shape[1] != n_classes:
        raise ValueError(f"profiles have {P.shape[1]} entries, expected {n_classes}")
    return P


def check_targets(y, n_samples: int) -> np.ndarray:
    y = check_array(np.asarray(y, dtype=float).reshape(-1, 1), dtype=np.float64).ravel()
    if len(y) != n_samples:
        raise ValueError(f"{len(y)} measured values for {n_samples} sources")
    return y


def check_grid(grid) -> np.ndarray:
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 3 or len(set(grid.shape)) != 1:
        raise ValueError(f"expected a cubic n x n x n grid, got shape {grid.shape}")
    if not np.all(np.isfinite(grid)):
        raise ValueError("grid contains non-finite values")
    return grid
