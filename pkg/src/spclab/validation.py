"""Small input-validation helpers used by the domain types and estimators."""

import os

import numpy as np

from .errors import ValidationError


def as_1d_float(x, name):
    arr = np.asarray(x, dtype=float)
    if arr.ndim != 1:
        raise ValidationError(f"{name}: expected a 1-D array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name}: contains non-finite values")
    return arr


def check_positive_scalar(x, name):
    x = float(x)
    if not np.isfinite(x) or x <= 0:
        raise ValidationError(f"{name}: must be > 0, got {x}")
    return x


def check_nonnegative_scalar(x, name):
    x = float(x)
    if not np.isfinite(x) or x < 0:
        raise ValidationError(f"{name}: must be >= 0, got {x}")
    return x


def check_strictly_increasing(arr, name):
    if np.any(np.diff(arr) <= 0):
        raise ValidationError(f"{name}: must be strictly increasing")
    return arr


def check_lengths_match(a, b, name_a, name_b):
    if len(a) != len(b):
        raise ValidationError(
            f"length mismatch: {name_a} has {len(a)} entries, {name_b} has {len(b)}"
        )


def frozen_array(x, name):
    """Validated read-only float array, for immutable value types."""
    arr = as_1d_float(x, name)
    arr = arr.copy()
    arr.flags.writeable = False
    return arr


def max_workers():
    """Parallelism cap from the SPCLAB_THREADS environment variable (default 1)."""
    raw = os.environ.get("SPCLAB_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ValidationError(f"SPCLAB_THREADS: expected an integer, got {raw!r}")
    return max(1, n)
