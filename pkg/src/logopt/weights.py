"""Portfolio weight vectors: nonnegative, summing to one."""

from __future__ import annotations

import numpy as np

SUM_TOL = 1e-9


class WeightsError(ValueError):
    """Raised when a vector is not a valid portfolio."""


def validate_weights(w, context: str = "portfolio") -> np.ndarray:
    """Check nonnegativity and unit sum; returns the vector as float64."""
    w = np.asarray(w, dtype=np.float64)
    if w.ndim != 1 or w.size < 1:
        raise WeightsError(f"{context}: expected a length-d vector, got shape {w.shape}")
    if not np.all(np.isfinite(w)):
        raise WeightsError(f"{context}: non-finite entry")
    if np.any(w < 0):
        raise WeightsError(f"{context}: negative entry {w.min()!r}")
    s = w.sum()
    if abs(s - 1.0) > SUM_TOL:
        raise WeightsError(f"{context}: weights sum to {s!r}, not 1")
    return w


def uniform_weights(d: int) -> np.ndarray:
    if d < 1:
        raise WeightsError("need at least one asset")
    return np.full(d, 1.0 / d)


def one_hot(d: int, index: int) -> np.ndarray:
    w = np.zeros(d)
    w[index] = 1.0
    return w
