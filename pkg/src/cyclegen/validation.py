"""Small argument-checking helpers shared across the package."""

import numpy as np


def require(condition, message):
    """Raise ValueError with *message* unless *condition* holds."""
    if not condition:
        raise ValueError(message)


def as_float_array(x, name="series", min_len=0):
    """Coerce to a 1-D float ndarray, enforcing a minimum length."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if arr.size < min_len:
        raise ValueError(f"{name} needs at least {min_len} samples, got {arr.size}")
    return arr


def check_same_length(*arrays, names=None):
    lengths = {len(a) for a in arrays}
    if len(lengths) > 1:
        labels = names or [f"arg{i}" for i in range(len(arrays))]
        detail = ", ".join(f"{n}={len(a)}" for n, a in zip(labels, arrays))
        raise ValueError(f"series lengths differ: {detail}")


def check_window(window, order, n_samples):
    """Validate centre-fit smoothing parameters against the series length."""
    if window < 1 or window % 2 == 0:
        raise ValueError(f"window must be a positive odd integer, got {window}")
    if order >= window:
        raise ValueError(f"polynomial order {order} must be < window {window}")
    if order < 0:
        raise ValueError(f"polynomial order must be >= 0, got {order}")
    if n_samples < window:
        raise ValueError(f"series of {n_samples} samples is shorter than window {window}")
