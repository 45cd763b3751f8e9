"""Input validation helpers shared by the estimators and the functional API."""
import numbers

import numpy as np
from sklearn.utils.validation import check_array


def check_points(X, name="X", min_samples=1):
    """Return ``X`` as a finite float64 array of shape (n_samples, n_features)."""
    X = check_array(
        X,
        dtype=np.float64,
        ensure_2d=True,
        ensure_min_samples=min_samples,
        input_name=name,
    )
    return np.ascontiguousarray(X)


def check_query(x, dim):
    """Return query point(s) as a 2-D float array with ``dim`` columns.

    A single vector is promoted to shape (1, dim).
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 0:
        x = x.reshape(1, 1)
    elif x.ndim == 1:
        x = x.reshape(1, -1) if x.shape[0] == dim else x.reshape(-1, 1)
    if x.ndim != 2 or x.shape[1] != dim:
        raise ValueError(f"query points must have {dim} coordinates, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError("query points must be finite")
    return np.ascontiguousarray(x)


def check_neighbor_count(k, n, name="k", minimum=1):
    if not isinstance(k, numbers.Integral) or isinstance(k, bool):
        raise TypeError(f"{name} must be an integer, got {k!r}")
    if not minimum <= k <= n:
        raise ValueError(f"{name} must satisfy {minimum} <= {name} <= {n}, got {k}")
    return int(k)


def check_fraction(value, name, low=0.0, high=1.0):
    value = float(value)
    if not low < value < high:
        raise ValueError(f"{name} must lie in ({low}, {high}), got {value}")
    return value


def is_prime(p):
    if not isinstance(p, numbers.Integral) or p < 2:
        return False
    return all(p % q for q in range(2, int(p**0.5) + 1))
