"""Small argument checks shared by the estimators and the pure functions."""

import numbers

import numpy as np
from sklearn.utils.validation import check_scalar


def check_positive_int(value, name):
    check_scalar(value, name, target_type=numbers.Integral, min_val=1)
    return int(value)


def check_unit_interval(value, name):
    check_scalar(value, name, target_type=numbers.Real, min_val=0.0, max_val=1.0)
    return float(value)


def check_score_vector(scores, name="scores"):
    """Return ``scores`` as a finite 1-D float array."""
    arr = np.asarray(scores, dtype=np.float64)
    if arr.ndim != 1 or arr.size == 0:
        raise ValueError(f"{name} must be a non-empty 1-D sequence, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def check_index(index, size, name="positive_index"):
    check_scalar(index, name, target_type=numbers.Integral, min_val=0, max_val=size - 1)
    return int(index)


def check_paired(a, b, min_len=2):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 1 or a.shape != b.shape:
        raise ValueError(f"paired samples must be 1-D with equal length, got {a.shape} and {b.shape}")
    if a.size < min_len:
        raise ValueError(f"need at least {min_len} paired observations, got {a.size}")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise ValueError("paired samples contain non-finite values")
    return a, b
