"""Micro- and macrofluid conversion in ideal PFR and CSTR reactors.

Design ``u = (residence time, initial concentration, reactor)`` with the
reactor coded 0 for PFR and 1 for CSTR. Each model has a single rate
parameter. Model ``i`` (1-based) differs in reaction order and mixing level:

=====  =====  ======  ===================  ==============================
model  order  mixing  PFR                  CSTR
=====  =====  ======  ===================  ==============================
1      0      micro   max(1 - R, 0)        max(1 - R, 0)
2      0      macro   max(1 - R, 0)        1 - R + R exp(-1/R)
3      1      both    exp(-R)              1 / (1 + R)
4      2      micro   1 / (1 + R)          (sqrt(1 + 4R) - 1) / (2R)
5      2      macro   1 / (1 + R)          exp(1/R) E1(1/R) / R
=====  =====  ======  ===================  ==============================

with ``R = theta u1 / u2`` (zeroth order), ``theta u1`` (first order) and
``theta u1 u2`` (second order).
"""

import numpy as np

from ..models import RivalModel
from .expint import scaled_exponential_integral

DESIGN_BOUNDS = np.array([[1.0, 100.0], [0.01, 1.0], [0.0, 1.0]])
PARAM_BOUNDS = np.array([[1e-6, 0.1]])
TRUE_THETA = (6e-3, 6e-3, 0.015, 0.025, 0.025)
NOISE_VARIANCE = 2.5e-3
ORDER = (0, 0, 1, 2, 2)


def reaction_number(index, U, theta):
    """``R`` and ``dR/dtheta`` for model ``index`` (1-based)."""
    u1, u2 = U[:, 0], U[:, 1]
    order = ORDER[index - 1]
    scale = u1 / u2 if order == 0 else (u1 if order == 1 else u1 * u2)
    return theta * scale, scale


def _conversion(index, R, cstr):
    """Conversion and its derivative with respect to ``R``."""
    if index in (1, 2):
        pfr = np.where(R < 1.0, 1.0 - R, 0.0)
        dpfr = np.where(R < 1.0, -1.0, 0.0)
    elif index == 3:
        pfr = np.exp(-R)
        dpfr = -pfr
    else:
        pfr = 1.0 / (1.0 + R)
        dpfr = -pfr ** 2

    if index == 1:
        c, dc = pfr, dpfr
    elif index == 2:
        e = np.exp(-1.0 / R)
        c = 1.0 - R + R * e
        dc = -1.0 + e * (1.0 + 1.0 / R)
    elif index == 3:
        c = 1.0 / (1.0 + R)
        dc = -c ** 2
    elif index == 4:
        s = np.sqrt(1.0 + 4.0 * R)
        c = 2.0 / (1.0 + s)
        dc = -4.0 / (s * (1.0 + s) ** 2)
    else:
        c, dc = _macro_second_order(R)
    return np.where(cstr, c, pfr), np.where(cstr, dc, dpfr)


def _macro_second_order(R):
    x = 1.0 / R
    S = scaled_exponential_integral(x)
    value = x * S
    # dh/dR = -x^2 ((1 + x) S - 1); the bracket cancels badly for large x,
    # where the asymptotic expansion sum_m (-1)^m (m-1)! (m-1) / x^m is used.
    direct = -x ** 2 * ((1.0 + x) * S - 1.0)
    asym = np.zeros_like(x)
    fact = 1.0
    for m in range(2, 12):
        fact *= m - 1                        # (m-1)!
        asym += (-1) ** m * fact * (m - 1) / x ** (m - 2)
    deriv = np.where(x >= 200.0, -asym, direct)
    return value, deriv


def _make(index):
    def func(U, T):
        R, _ = reaction_number(index, U, T[:, 0])
        c, _ = _conversion(index, R, U[:, 2] == 1)
        return c[:, None]

    def jac(U, T):
        R, scale = reaction_number(index, U, T[:, 0])
        _, dc = _conversion(index, R, U[:, 2] == 1)
        return (dc * scale)[:, None, None]

    return RivalModel(
        name=f"mixing_f{index}", func=func, design_bounds=DESIGN_BOUNDS,
        param_bounds=PARAM_BOUNDS, output_dim=1, binary_dims=(2,), jacobian=jac)


def models():
    return [_make(i) for i in range(1, 6)]
