"""Deterministic temporal index rules shared by the skeleton and parsing paths."""

import numpy as np


def center_indices(n: int, t: int) -> np.ndarray:
    """Indices floor((i + 0.5) * n / t) for i in range(t), in exact integer math."""
    if n < 1 or t < 1:
        raise ValueError(f"need n >= 1 and t >= 1, got n={n}, t={t}")
    i = np.arange(t, dtype=np.int64)
    return ((2 * i + 1) * n) // (2 * t)
