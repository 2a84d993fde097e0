"""Input validation helpers shared by the kernels and the estimator API."""

from __future__ import annotations

import numpy as np


class DomainError(ValueError):
    """A state or sample lies outside the domain of a kernel."""


def check_state(x, lo: float = 0.0, hi: float = 1.0):
    """Return ``x`` unchanged after checking ``lo < x < hi`` elementwise."""
    arr = np.asarray(x, dtype=float)
    if not np.all((arr > lo) & (arr < hi)):
        bad = arr[~((arr > lo) & (arr < hi))] if arr.ndim else arr
        raise DomainError(f"state must lie in ({lo}, {hi}); got {np.ravel(bad)[:5]}")
    return x


def check_finite(a, name: str):
    arr = np.asarray(a, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} must be finite")
    return a


def check_states_array(X) -> np.ndarray:
    """Accept a 1-d sequence or an (n, 1) column of states; return a flat float array."""
    from sklearn.utils.validation import check_array

    arr = np.asarray(X, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if arr.ndim == 1:
        arr = arr[:, None]
    arr = check_array(arr, ensure_2d=True, dtype=float)
    if arr.shape[1] != 1:
        raise ValueError(f"expected a single state column, got shape {arr.shape}")
    return arr[:, 0]
