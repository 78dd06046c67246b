"""Rate models for ammonia synthesis over an iron catalyst.

Design ``u = (P [atm], T [K], x_NH3)``. Models 1 and 2 carry one rate
coefficient ``C_1``, model 3 two and model 4 three, each coefficient
``C_j = exp(theta_j1 - theta_j2 (T - 700) / T)`` contributing two
parameters ordered ``(theta_11, theta_12, theta_21, ...)``.
"""

import numpy as np

from ..exceptions import ModelEvaluationError
from ..models import RivalModel

DESIGN_BOUNDS = np.array([[300.0, 350.0], [703.0, 753.0], [0.1, 0.2]])
TRUE_THETA = (3.68, 11.8)
NOISE_VARIANCE = 90.0
N_COEFFICIENTS = (1, 1, 2, 3)


def mole_fractions(x_nh3):
    x_n2 = 0.25 * (1.0 - x_nh3)
    return x_n2, 3.0 * x_n2, x_nh3


def activity_coefficients(P, T):
    """Fugacity coefficients of H2, N2 and NH3."""
    g_h2 = np.exp(P * np.exp(0.541 - 3.8402 * T ** 0.125)
                  - P ** 2 * np.exp(-15.98 - 0.1263 * T ** 0.5)
                  + 300.0 * (np.exp(-P / 300.0) - 1.0) / np.exp(5.941 + 0.011901 * T))
    g_n2 = (0.93431737 + 3.101804e-4 * T + 2.958960e-4 * P
            - 2.707279e-7 * T ** 2 + 4.775207e-7 * P ** 2)
    g_nh3 = (0.14389960 + 2.028538e-3 * T - 4.487672e-4 * P
             - 1.142945e-6 * T ** 2 + 2.761216e-7 * P ** 2)
    return g_h2, g_n2, g_nh3


def log10_equilibrium_constant(T):
    return (2.6899 - 2.691122 * np.log10(T) - 5.519265e-5 * T
            + 1.848863e-7 * T ** 2 + 2001.6 / T)


def fugacities(U):
    P, T, x = U[:, 0], U[:, 1], U[:, 2]
    x_n2, x_h2, x_nh3 = mole_fractions(x)
    g_h2, g_n2, g_nh3 = activity_coefficients(P, T)
    return P * x_h2 * g_h2, P * x_n2 * g_n2, P * x_nh3 * g_nh3


def rate_coefficients(T, Theta):
    """``C_j`` for each coefficient column, shape (n, n_coefficients)."""
    tau = ((T - 700.0) / T)[:, None]
    return np.exp(Theta[:, 0::2] - Theta[:, 1::2] * tau), tau


def _parts(index, U):
    """Numerator and the factors multiplying each ``C_j`` in the denominator."""
    h2, n2, nh3 = fugacities(U)
    K = 10.0 ** log10_equilibrium_constant(U[:, 1])
    if index == 1:
        num = n2 - nh3 / (h2 ** 3 * K ** 2)
        factors = [nh3 / h2 ** 1.5]
    elif index == 2:
        num = n2 * h2 - nh3 / (h2 * K) ** 2
        factors = [nh3]
    else:
        num = np.sqrt(n2) * h2 ** 1.5 - nh3 / K
        if index == 3:
            factors = [nh3, np.sqrt(n2 / h2)]
        else:
            factors = [nh3, n2, nh3 / n2]
    return num, np.stack(factors, axis=1)


def _make(index):
    name = f"ammonia_f{index}"

    def denominator(U, T):
        num, a = _parts(index, U)
        C, tau = rate_coefficients(U[:, 1], T)
        den = np.sum(C * a, axis=1)
        if np.any(~(den > 0) | ~np.isfinite(den)):
            raise ModelEvaluationError(f"{name}: rate denominator is not a positive finite number")
        return num, a, C, tau, den

    def func(U, T):
        num, _, _, _, den = denominator(U, T)
        return (num / den)[:, None]

    def jac(U, T):
        num, a, C, tau, den = denominator(U, T)
        dden = C * a                                   # d den / d theta_j1
        J = np.empty((len(U), 1, T.shape[1]))
        J[:, 0, 0::2] = -(num / den ** 2)[:, None] * dden
        J[:, 0, 1::2] = (num / den ** 2)[:, None] * dden * tau
        return J

    nc = N_COEFFICIENTS[index - 1]
    bounds = np.tile([[0.1, 10.0], [0.1, 100.0]], (nc, 1))
    return RivalModel(name=name, func=func, design_bounds=DESIGN_BOUNDS,
                      param_bounds=bounds, output_dim=1, jacobian=jac)


def models():
    return [_make(i) for i in range(1, 5)]
