"""Input validation helpers shared by the estimators and functional APIs."""

import numpy as np
from sklearn.utils.validation import check_array

from .exceptions import ContractError


def as_2d(X, n_features=None, name="X"):
    """Return ``X`` as a finite float64 2-D array, promoting 1-D input to one row."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    X = check_array(X, dtype=np.float64, ensure_2d=True, ensure_min_samples=1)
    if n_features is not None and X.shape[1] != n_features:
        raise ContractError(
            f"{name} has {X.shape[1]} columns, expected {n_features}")
    return X


def as_vector(v, size=None, name="vector"):
    v = np.atleast_1d(np.asarray(v, dtype=float))
    if v.ndim != 1:
        raise ContractError(f"{name} must be one-dimensional, got shape {v.shape}")
    if size is not None and v.shape[0] != size:
        raise ContractError(f"{name} has length {v.shape[0]}, expected {size}")
    if not np.all(np.isfinite(v)):
        raise ContractError(f"{name} contains non-finite values")
    return v


def as_bounds(bounds, size=None, name="bounds"):
    """Validate a sequence of (low, high) pairs and return a (D, 2) array."""
    b = np.asarray(bounds, dtype=float)
    if b.ndim != 2 or b.shape[1] != 2:
        raise ContractError(f"{name} must have shape (D, 2), got {b.shape}")
    if size is not None and b.shape[0] != size:
        raise ContractError(f"{name} has {b.shape[0]} rows, expected {size}")
    if np.any(b[:, 1] < b[:, 0]):
        raise ContractError(f"{name} has a lower bound above its upper bound")
    return b


def as_covariance(S, size=None, name="covariance", tol=1e-8, strict=False):
    """Validate a symmetric PSD matrix; scalars are promoted to 1x1.

    ``strict`` additionally requires positive definiteness.
    """
    S = np.atleast_2d(np.asarray(S, dtype=float))
    if S.shape[0] != S.shape[1]:
        raise ContractError(f"{name} must be square, got {S.shape}")
    if size is not None and S.shape[0] != size:
        raise ContractError(f"{name} is {S.shape[0]}x{S.shape[0]}, expected {size}")
    if not np.all(np.isfinite(S)):
        raise ContractError(f"{name} contains non-finite values")
    scale = max(1.0, float(np.max(np.abs(S)))) if S.size else 1.0
    if not np.allclose(S, S.T, rtol=0.0, atol=1e-10 * scale):
        raise ContractError(f"{name} is not symmetric")
    S = 0.5 * (S + S.T)
    eig = np.linalg.eigvalsh(S) if S.size else np.zeros(0)
    if eig.size and eig.min() < -tol * scale:
        raise ContractError(
            f"{name} is not positive semi-definite (min eigenvalue {eig.min():.3g})")
    if strict and eig.size and eig.min() <= 0.0:
        raise ContractError(f"{name} is not positive definite")
    return S


def in_bounds(x, bounds, tol=1e-12):
    b = np.asarray(bounds, dtype=float)
    width = np.maximum(b[:, 1] - b[:, 0], 1.0)
    return bool(np.all(x >= b[:, 0] - tol * width) and np.all(x <= b[:, 1] + tol * width))
