"""Exponential integral E1(x) = int_x^inf exp(-t)/t dt for x > 0."""

import numpy as np

from ..exceptions import ContractError

_EULER = 0.57721566490153286061
_SERIES_CUTOFF = 3.0
_MAX_ITER = 500


def _series(x):
    # E1(x) = -gamma - ln x - sum_{k>=1} (-x)^k / (k k!)
    total = np.zeros_like(x)
    term = np.ones_like(x)
    for k in range(1, _MAX_ITER):
        term = term * (-x) / k
        inc = term / k
        total += inc
        if np.all(np.abs(inc) <= 1e-17 * np.abs(total)):
            break
    return -_EULER - np.log(x) - total


def _continued_fraction(x):
    # exp(x) E1(x) via the modified Lentz algorithm
    tiny = 1e-300
    b = x + 1.0
    c = np.full_like(x, 1.0 / tiny)
    d = 1.0 / b
    h = d.copy()
    for i in range(1, _MAX_ITER):
        a = -float(i * i)
        b = b + 2.0
        d = 1.0 / (a * d + b)
        c = b + a / c
        delta = c * d
        h *= delta
        if np.all(np.abs(delta - 1.0) <= 1e-16):
            break
    return h


def _check(x):
    x = np.asarray(x, dtype=float)
    if np.any(~(x > 0)):
        raise ContractError("the exponential integral is defined here only for x > 0")
    return x


def scaled_exponential_integral(x):
    """``exp(x) * E1(x)``, stable for very large ``x``."""
    x = _check(x)
    flat = np.atleast_1d(x).ravel()
    out = np.empty_like(flat)
    small = flat < _SERIES_CUTOFF
    if small.any():
        out[small] = np.exp(flat[small]) * _series(flat[small])
    if (~small).any():
        out[~small] = _continued_fraction(flat[~small])
    out = out.reshape(np.shape(x))
    return float(out) if np.ndim(x) == 0 else out


def exponential_integral(x):
    """E1(x) for ``x > 0``: series below 3, continued fraction above."""
    x = _check(x)
    flat = np.atleast_1d(x).ravel()
    out = np.empty_like(flat)
    small = flat < _SERIES_CUTOFF
    if small.any():
        out[small] = _series(flat[small])
    if (~small).any():
        big = flat[~small]
        out[~small] = _continued_fraction(big) * np.exp(-big)
    out = out.reshape(np.shape(x))
    return float(out) if np.ndim(x) == 0 else out
