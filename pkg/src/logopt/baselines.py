"""The three comparison strategies: spread evenly, chase, or fade the last move."""

from __future__ import annotations

import numpy as np

from .weights import one_hot, uniform_weights


def naive_average(d: int) -> np.ndarray:
    """Uniform portfolio over ``d`` assets."""
    return uniform_weights(d)


def follow_winner(prev: np.ndarray) -> np.ndarray:
    """All-in on the best performer of the previous period (ties: lowest index)."""
    prev = np.asarray(prev, dtype=np.float64)
    return one_hot(prev.size, int(np.argmax(prev)))


def follow_loser(prev: np.ndarray) -> np.ndarray:
    """All-in on the worst performer of the previous period (ties: lowest index)."""
    prev = np.asarray(prev, dtype=np.float64)
    return one_hot(prev.size, int(np.argmin(prev)))
