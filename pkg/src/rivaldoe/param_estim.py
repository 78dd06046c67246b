"""Maximum-likelihood parameter estimation and Laplace parameter covariance."""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular
from scipy.optimize import differential_evolution, least_squares

from ._validation import as_2d, as_covariance
from .exceptions import ContractError, SingularInformationError
from .models import RivalModel


@dataclass(frozen=True)
class ExperimentalDataset:
    """Designs ``U`` (N, D), observations ``Y`` (N, E) and noise covariance (E, E)."""

    designs: np.ndarray
    observations: np.ndarray
    noise_covariance: np.ndarray

    def __post_init__(self):
        U = as_2d(self.designs, name="designs")
        Y = np.asarray(self.observations, dtype=float)
        if Y.ndim == 1:
            Y = Y[:, None] if len(U) == len(Y) and len(U) > 1 else np.atleast_2d(Y)
        Y = as_2d(Y, name="observations")
        if len(Y) != len(U):
            raise ContractError(f"{len(U)} designs but {len(Y)} observations")
        S = as_covariance(self.noise_covariance, Y.shape[1], "noise_covariance", strict=True)
        object.__setattr__(self, "designs", U)
        object.__setattr__(self, "observations", Y)
        object.__setattr__(self, "noise_covariance", S)

    def __len__(self):
        return len(self.designs)

    def append(self, u, y):
        return ExperimentalDataset(np.vstack([self.designs, np.atleast_2d(u)]),
                                   np.vstack([self.observations, np.atleast_2d(y)]),
                                   self.noise_covariance)


@dataclass(frozen=True)
class ParameterEstimate:
    """``theta_star``, optional Laplace ``covariance`` and the weighted SSE.

    ``converged`` is False when every optimiser start reported failure; the
    best point found is returned regardless.
    """

    theta_star: np.ndarray
    residual_sse: float
    covariance: np.ndarray = None
    converged: bool = True


def weighted_residuals(model, data, theta):
    """Whitened residuals ``L^{-1}(y_n - f(u_n, theta))`` stacked to (N*E,)."""
    L = np.linalg.cholesky(data.noise_covariance)
    R = data.observations - model.eval(data.designs, theta)
    return solve_triangular(L, R.T, lower=True).T.ravel()


def weighted_sse(model, data, theta):
    r = weighted_residuals(model, data, theta)
    return float(r @ r)


def estimate_parameters(model, data, method="least_squares", init=None, *,
                        n_starts=3, random_state=None, compute_covariance=False):
    """Fit ``theta`` by minimising the noise-weighted sum of squared residuals.

    Parameters
    ----------
    model : RivalModel
    data : ExperimentalDataset
    method : {"least_squares", "diff_evolution"}
    init : array-like, optional
        Warm start, e.g. the previous estimate. The bound-box centre is used
        when omitted.
    n_starts : int
        Additional uniformly random starts for ``least_squares``.
    random_state : int or Generator, optional
    compute_covariance : bool
        Attach the Laplace covariance computed from the model Jacobian.

    Returns
    -------
    ParameterEstimate
    """
    if len(data) < 1:
        raise ContractError("need at least one observation")
    rng = np.random.default_rng(random_state)
    lo, hi = model.param_bounds[:, 0], model.param_bounds[:, 1]
    width = np.where(hi > lo, hi - lo, 1.0)
    to_theta = lambda p: lo + np.clip(p, 0.0, 1.0) * width
    L = np.linalg.cholesky(data.noise_covariance)
    U, Y = data.designs, data.observations

    def residuals(p):
        R = Y - model.eval(U, to_theta(p))
        return solve_triangular(L, R.T, lower=True).T.ravel()

    start = np.full(model.param_dim, 0.5) if init is None else np.clip((np.asarray(init, float) - lo) / width, 0, 1)

    if method == "least_squares":
        starts = [start] + [rng.random(model.param_dim) for _ in range(n_starts)]
        best, ok = None, False
        for p0 in starts:
            res = least_squares(residuals, p0, jac="3-point", diff_step=1e-6, bounds=(0.0, 1.0),
                                method="trf", x_scale=1.0, xtol=1e-12, ftol=1e-12, gtol=1e-12,
                                max_nfev=200 * model.param_dim)
            ok = ok or res.status > 0
            if best is None or res.cost < best.cost:
                best = res
        p = best.x
    elif method == "diff_evolution":
        n, E = U.shape[0], Y.shape[1]
        Linv = solve_triangular(L, np.eye(E), lower=True)

        def objective(P):
            P = np.atleast_2d(P.T)                     # (S, D_i)
            S = P.shape[0]
            F = model.eval(np.tile(U, (S, 1)), np.repeat(to_theta(P), n, axis=0))
            R = (np.tile(Y, (S, 1)) - F) @ Linv.T
            return np.sum(R.reshape(S, n * E) ** 2, axis=1)

        res = differential_evolution(
            objective, [(0.0, 1.0)] * model.param_dim, strategy="rand1bin", popsize=15,
            maxiter=200, mutation=0.7, recombination=0.9, seed=rng, polish=False,
            vectorized=True, updating="deferred", x0=start, tol=1e-10)
        # local refinement from the best member, kept only if it improves
        ref = least_squares(residuals, res.x, jac="3-point", diff_step=1e-6, bounds=(0.0, 1.0),
                            xtol=1e-12, ftol=1e-12, gtol=1e-12)
        p = ref.x if 2 * ref.cost <= res.fun else res.x
        ok = bool(res.success) or ref.status > 0
    else:
        raise ContractError(f"unknown estimation method {method!r}")

    theta = to_theta(p)
    sse = weighted_sse(model, data, theta)
    cov = laplace_covariance(model, data, theta) if compute_covariance else None
    return ParameterEstimate(theta, sse, cov, bool(ok))


def information_matrix(jacobians, noise_covariance):
    """``sum_n J_n^T Sigma^{-1} J_n`` for Jacobians of shape (N, E, D_i)."""
    J = np.asarray(jacobians, dtype=float)
    if J.ndim == 2:
        J = J[:, None, :]
    Sinv = np.linalg.inv(np.atleast_2d(noise_covariance))
    return np.einsum("nei,ef,nfj->ij", J, Sinv, J)


def invert_information(F):
    """Invert a parameter information matrix with ridge escalation.

    A ridge ``delta I`` with ``delta = 1e-8 tr(F) / D_i`` is added when ``F``
    is numerically singular, growing tenfold up to ``1e-2 tr(F) / D_i``.
    """
    F = 0.5 * (F + F.T)
    D = F.shape[0]
    base = np.trace(F) / D
    if not np.isfinite(base) or base <= 0:
        raise SingularInformationError("parameter information matrix is zero")
    delta = 0.0
    while True:
        A = F + delta * np.eye(D)
        eig = np.linalg.eigvalsh(A)
        if eig.min() > 1e-12 * eig.max():
            C = np.linalg.inv(A)
            return 0.5 * (C + C.T)
        delta = 1e-8 * base if delta == 0.0 else 10.0 * delta
        if delta > 1e-2 * base * (1 + 1e-9):
            raise SingularInformationError(
                f"information matrix singular after ridge {delta / 10:.3g}")


def laplace_covariance(predictor, data, theta_star):
    """Laplace approximation ``[sum_n J_n^T Sigma^{-1} J_n]^{-1}``.

    ``predictor`` is a :class:`RivalModel` (analytic or finite-difference
    Jacobian) or a callable ``(U, theta) -> J`` returning (N, E, D_i)
    parameter gradients, e.g. from a GP surrogate.
    """
    if isinstance(predictor, RivalModel):
        J = predictor.param_jacobian(data.designs, theta_star)
    else:
        J = predictor(data.designs, np.asarray(theta_star, dtype=float))
    J = np.asarray(J, dtype=float)
    if J.ndim == 2:
        J = J[:, None, :]
    return invert_information(information_matrix(J, data.noise_covariance))
