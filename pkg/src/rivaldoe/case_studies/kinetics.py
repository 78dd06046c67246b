"""Two-output chemical kinetic models with four parameters each.

With ``g = 1 + theta_3 x_1 + theta_4 x_2`` and ``h_j = 1 + theta_{2+j} x_j``:

* model 1: ``theta_1 x1 x2 / g``,    ``theta_2 x1 x2 / g``
* model 2: ``theta_1 x1 x2 / g^2``,  ``theta_2 x1 x2 / h_1^2``
* model 3: ``theta_1 x1 x2 / h_1^2``, ``theta_2 x1 x2 / h_2^2``
* model 4: ``theta_1 x1 x2 / g``,    ``theta_2 x1 x2 / h_1``
"""

import numpy as np

from ..exceptions import ModelEvaluationError
from ..models import RivalModel

DESIGN_BOUNDS = np.array([[5.0, 55.0], [5.0, 55.0]])
PARAM_BOUNDS = np.tile([0.0, 1.0], (4, 1))
TRUE_THETA = (0.1, 0.01, 0.1, 0.01)
NOISE_COVARIANCE = np.diag([0.35, 2.3e-3])

# (denominator kind, power) per output; kind is "g", "h1" or "h2"
_STRUCTURE = {
    1: (("g", 1), ("g", 1)),
    2: (("g", 2), ("h1", 2)),
    3: (("h1", 2), ("h2", 2)),
    4: (("g", 1), ("h1", 1)),
}


def _denominator(kind, x1, x2, T):
    """Denominator base and its gradient with respect to (theta_3, theta_4)."""
    zero = np.zeros_like(x1)
    if kind == "g":
        return 1.0 + T[:, 2] * x1 + T[:, 3] * x2, (x1, x2)
    if kind == "h1":
        return 1.0 + T[:, 2] * x1, (x1, zero)
    return 1.0 + T[:, 3] * x2, (zero, x2)


def _make(index):
    name = f"kinetics_f{index}"
    structure = _STRUCTURE[index]

    def pieces(U, T):
        x1, x2 = U[:, 0], U[:, 1]
        out = []
        for e, (kind, power) in enumerate(structure):
            base, grad = _denominator(kind, x1, x2, T)
            if np.any(base == 0):
                raise ModelEvaluationError(f"{name}: zero denominator in output {e + 1}")
            out.append((base, grad, power))
        return x1 * x2, out

    def func(U, T):
        prod, parts = pieces(U, T)
        return np.stack([T[:, e] * prod / base ** p for e, (base, _, p) in enumerate(parts)], axis=1)

    def jac(U, T):
        prod, parts = pieces(U, T)
        J = np.zeros((len(U), 2, 4))
        for e, (base, grad, p) in enumerate(parts):
            J[:, e, e] = prod / base ** p
            coef = -p * T[:, e] * prod / base ** (p + 1)
            J[:, e, 2] = coef * grad[0]
            J[:, e, 3] = coef * grad[1]
        return J

    return RivalModel(name=name, func=func, design_bounds=DESIGN_BOUNDS,
                      param_bounds=PARAM_BOUNDS, output_dim=2, jacobian=jac)


def models():
    return [_make(i) for i in range(1, 5)]
