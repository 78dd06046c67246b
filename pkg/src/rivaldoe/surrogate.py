"""GP surrogates of rival models and Gaussian marginal predictive distributions.

A surrogate emulates one model over the joint space of continuous design
variables and parameters, with one GP per output and per combination of the
binary design variables. Parameter uncertainty ``theta ~ N(theta*, S)`` is
then propagated to the prediction by a first- or second-order Taylor
expansion of the surrogate, or, for models with a parameter Jacobian, by
first-order propagation through the model itself.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import qmc
from sklearn.base import BaseEstimator

from ._validation import as_covariance, as_vector
from .exceptions import ContractError, DataGenerationError, ModelEvaluationError
from .gp import (
    GPTrainingSet,
    gp_fit,
    predict_batch,
    predict_derivatives_batch,
    sparse_fit,
)
from .models import RivalModel

logger = logging.getLogger(__name__)

__all__ = [
    "RivalModel",
    "GaussianPrediction",
    "SurrogateTrainingData",
    "SurrogateEnsemble",
    "GPSurrogate",
    "parameter_region",
    "generate_training_data",
    "build_surrogate",
    "marginal_taylor1",
    "marginal_taylor2",
    "marginal_analytic",
]


@dataclass(frozen=True)
class GaussianPrediction:
    """Mean and covariance of a (marginal) predictive distribution.

    ``mean`` is (E,) or (n, E) and ``covariance`` (E, E) or (n, E, E) for a
    batch of designs.
    """

    mean: np.ndarray
    covariance: np.ndarray

    def __post_init__(self):
        mu = np.asarray(self.mean, dtype=float)
        S = np.asarray(self.covariance, dtype=float)
        if S.shape != mu.shape + mu.shape[-1:]:
            raise ContractError(f"covariance shape {S.shape} does not match mean {mu.shape}")
        St = np.swapaxes(S, -1, -2)
        scale = max(1.0, float(np.abs(S).max())) if S.size else 1.0
        if not np.allclose(S, St, rtol=0, atol=1e-10 * scale):
            raise ContractError("predictive covariance is not symmetric")
        S = 0.5 * (S + St)
        if S.size and np.linalg.eigvalsh(S).min() < -1e-8 * scale:
            raise ContractError("predictive covariance is not positive semi-definite")
        object.__setattr__(self, "mean", mu)
        object.__setattr__(self, "covariance", S)

    def with_noise(self, noise):
        """Add the experimental noise covariance."""
        return GaussianPrediction(self.mean, self.covariance + np.atleast_2d(noise))

    def __getitem__(self, idx):
        return GaussianPrediction(self.mean[idx], self.covariance[idx])


# --------------------------------------------------------------------------
# training data


def parameter_region(model, center, spread):
    """Box ``center +- spread * width`` clipped to the parameter bounds."""
    b = model.param_bounds
    c = as_vector(center, model.param_dim, "param_center")
    if np.any(c < b[:, 0] - 1e-12) or np.any(c > b[:, 1] + 1e-12):
        raise ContractError("param_center lies outside the parameter bounds")
    half = spread * (b[:, 1] - b[:, 0])
    return np.stack([np.maximum(b[:, 0], c - half), np.minimum(b[:, 1], c + half)], axis=1)


@dataclass(frozen=True)
class SurrogateTrainingData:
    """Noise-free model evaluations, keyed by ``(binary_combination, output)``."""

    model: RivalModel
    param_region: np.ndarray
    input_bounds: np.ndarray
    sets: dict
    grid_spec: dict

    def __len__(self):
        return len(self.sets)


def _axes(lo, hi, n):
    return [np.linspace(a, b, n) if b > a else np.array([a]) for a, b in zip(lo, hi)]


def generate_training_data(model, points_per_dim, param_center, param_spread=0.2, *,
                           max_points=None, random_state=None):
    """Evaluate ``model`` on a grid over (continuous design, parameter) space.

    The grid is full factorial with ``points_per_dim`` levels per dimension.
    When that exceeds ``max_points`` a Latin-hypercube sample of
    ``max_points`` rows over the same box is used instead.
    """
    if points_per_dim < 2:
        raise ContractError("points_per_dim must be at least 2")
    region = parameter_region(model, param_center, param_spread)
    cont = list(model.continuous_dims)
    box = np.vstack([model.design_bounds[cont], region])
    n_grid = points_per_dim ** len(box)
    if max_points is not None and n_grid > max_points:
        sampler = qmc.LatinHypercube(d=len(box), seed=np.random.default_rng(random_state))
        Z = qmc.scale(sampler.random(int(max_points)), box[:, 0],
                      np.where(box[:, 1] > box[:, 0], box[:, 1], box[:, 0] + 1e-300))
        kind = "lhs"
    else:
        mesh = np.meshgrid(*_axes(box[:, 0], box[:, 1], points_per_dim), indexing="ij")
        Z = np.stack([m.ravel() for m in mesh], axis=1)
        kind = "grid"
    Dc = len(cont)
    sets = {}
    for combo in model.binary_combinations():
        U = np.zeros((len(Z), model.design_dim))
        U[:, cont] = Z[:, :Dc]
        if model.binary_dims:
            U[:, list(model.binary_dims)] = combo
        try:
            F = model.eval(U, Z[:, Dc:])
        except ModelEvaluationError as exc:
            raise DataGenerationError(f"{model.name}: {exc}") from exc
        for e in range(model.output_dim):
            sets[(combo, e)] = GPTrainingSet(Z, F[:, e])
    spec = {"kind": kind, "points_per_dim": int(points_per_dim), "n_rows": int(len(Z)),
            "param_spread": float(param_spread)}
    return SurrogateTrainingData(model, region, box, sets, spec)


# --------------------------------------------------------------------------
# ensemble


@dataclass(frozen=True, eq=False)
class SurrogateEnsemble:
    """Fitted GPs of one rival model, keyed by ``(binary_combination, output)``.

    Every GP takes ``[u_continuous, theta]`` as input.
    """

    model: RivalModel
    gps: dict
    param_region: np.ndarray
    grid_spec: dict = field(default_factory=dict)

    @property
    def n_continuous(self):
        return len(self.model.continuous_dims)

    @property
    def param_dims(self):
        Dc = self.n_continuous
        return list(range(Dc, Dc + self.model.param_dim))

    def kernels(self):
        return {key: gp.kernel for key, gp in self.gps.items()}

    def covers(self, theta, fraction=0.5):
        """Whether ``theta`` lies in the central ``fraction`` of the parameter region."""
        theta = np.asarray(theta, dtype=float)
        lo, hi = self.param_region[:, 0], self.param_region[:, 1]
        mid, half = 0.5 * (lo + hi), 0.5 * fraction * (hi - lo)
        b = self.model.param_bounds
        # a region clipped at a parameter bound covers up to that bound
        low_ok = (theta >= mid - half) | (lo <= b[:, 0])
        high_ok = (theta <= mid + half) | (hi >= b[:, 1])
        return bool(np.all(low_ok & high_ok & (theta >= lo) & (theta <= hi)))

    def _groups(self, U, theta):
        U = np.atleast_2d(np.asarray(U, dtype=float))
        theta = as_vector(theta, self.model.param_dim, "theta")
        cont = list(self.model.continuous_dims)
        Z = np.hstack([U[:, cont], np.broadcast_to(theta, (len(U), len(theta)))])
        if not self.model.binary_dims:
            return [((), np.arange(len(U)), Z)]
        B = U[:, list(self.model.binary_dims)]
        out = []
        for combo in self.model.binary_combinations():
            idx = np.flatnonzero(np.all(B == combo, axis=1))
            if idx.size:
                out.append((combo, idx, Z[idx]))
        if sum(len(i) for _, i, _ in out) != len(U):
            raise ContractError("binary design variables must be 0 or 1")
        return out

    def predict(self, U, theta):
        """Surrogate mean and variance, each of shape (n, E)."""
        n, E = len(np.atleast_2d(U)), self.model.output_dim
        mean, var = np.empty((n, E)), np.empty((n, E))
        for combo, idx, Z in self._groups(U, theta):
            for e in range(E):
                mean[idx, e], var[idx, e] = predict_batch(self.gps[(combo, e)], Z)
        return mean, np.maximum(var, 0.0)

    def derivatives(self, U, theta):
        """Mean, variance and their parameter gradients and Hessians.

        Shapes: (n, E), (n, E), (n, E, D_i), (n, E, D_i), (n, E, D_i, D_i),
        (n, E, D_i, D_i).
        """
        n, E, P = len(np.atleast_2d(U)), self.model.output_dim, self.model.param_dim
        out = [np.empty((n, E)), np.empty((n, E)), np.empty((n, E, P)), np.empty((n, E, P)),
               np.empty((n, E, P, P)), np.empty((n, E, P, P))]
        dims = self.param_dims
        for combo, idx, Z in self._groups(U, theta):
            for e in range(E):
                res = predict_derivatives_batch(self.gps[(combo, e)], Z, dims)
                for arr, r in zip(out, res):
                    arr[idx, e] = r
        out[1] = np.maximum(out[1], 0.0)
        return tuple(out)

    def param_gradients(self, U, theta):
        """``d mu / d theta`` of shape (n, E, D_i); usable as a Laplace predictor."""
        return self.derivatives(U, theta)[2]


def build_surrogate(model, training_data, kernel_init=None, *, n_restarts=5,
                    n_inducing=None, random_state=None):
    """Fit one GP per output and binary combination.

    ``kernel_init`` is a single :class:`KernelParams` or a dict keyed like
    the training sets (e.g. the kernels of a previous ensemble, to warm
    start a retrain).
    """
    if training_data.model is not model:
        if training_data.model.name != model.name:
            raise ContractError("training data was generated from a different model")
    rng = np.random.default_rng(random_state)
    gps = {}
    for key, ts in training_data.sets.items():
        init = kernel_init.get(key) if isinstance(kernel_init, dict) else kernel_init
        seed = int(rng.integers(2 ** 32))
        kw = dict(input_bounds=training_data.input_bounds, n_restarts=n_restarts,
                  random_state=seed)
        if n_inducing is not None and n_inducing < len(ts.targets):
            gps[key] = sparse_fit(ts, init, n_inducing, **kw)
        else:
            gps[key] = gp_fit(ts, init, **kw)
    return SurrogateEnsemble(model, gps, training_data.param_region, dict(training_data.grid_spec))


class GPSurrogate(BaseEstimator):
    """Estimator wrapper: ``fit(param_center)`` builds the ensemble around it.

    Parameters
    ----------
    model : RivalModel
    points_per_dim : int
    param_spread : float
        Half-width of the parameter grid as a fraction of the bound width.
    max_training_points : int, optional
        Switch from the factorial grid to a Latin hypercube above this size.
    n_inducing : int, optional
        Use the sparse GP with this many inducing inputs.
    n_restarts : int
    random_state : int or None
    """

    def __init__(self, model=None, points_per_dim=7, param_spread=0.2, max_training_points=None,
                 n_inducing=None, n_restarts=5, random_state=None):
        self.model = model
        self.points_per_dim = points_per_dim
        self.param_spread = param_spread
        self.max_training_points = max_training_points
        self.n_inducing = n_inducing
        self.n_restarts = n_restarts
        self.random_state = random_state

    def fit(self, param_center, y=None, kernel_init=None):
        if self.model is None:
            raise ContractError("GPSurrogate needs a model")
        rng = np.random.default_rng(self.random_state)
        data = generate_training_data(self.model, self.points_per_dim, param_center,
                                      self.param_spread, max_points=self.max_training_points,
                                      random_state=rng)
        self.ensemble_ = build_surrogate(self.model, data, kernel_init,
                                         n_restarts=self.n_restarts, n_inducing=self.n_inducing,
                                         random_state=rng)
        return self

    def predict(self, U, theta, return_var=False):
        mean, var = self.ensemble_.predict(U, theta)
        return (mean, var) if return_var else mean


# --------------------------------------------------------------------------
# marginalisation


def _check_sigma(Sigma_theta, D):
    return as_covariance(Sigma_theta, D, "Sigma_theta")


def _psd_repair(C):
    """Symmetrise and clip negative eigenvalues at zero (batched)."""
    C = 0.5 * (C + np.swapaxes(C, -1, -2))
    w, V = np.linalg.eigh(C)
    neg = np.minimum(w, 0.0)
    if np.any(neg < 0):
        trace = np.maximum(np.abs(np.trace(C, axis1=-2, axis2=-1)), 1e-300)
        logger.debug("clipped negative eigenvalues, max relative size %.3g",
                     float(np.max(-neg.sum(-1) / trace)))
        C = np.einsum("...ij,...j,...kj->...ik", V, np.maximum(w, 0.0), V)
        C = 0.5 * (C + np.swapaxes(C, -1, -2))
    return C


def _finish(mean, cov, single):
    cov = _psd_repair(cov)
    if single:
        return GaussianPrediction(mean[0], cov[0])
    return GaussianPrediction(mean, cov)


def marginal_taylor1(ens, U, theta_star, Sigma_theta, use_exact_mean=False):
    """First-order Taylor marginal of the surrogate prediction (noise excluded).

    ``mean = mu(z*)`` and ``cov = diag(sigma^2(z*)) + G S G^T`` with ``G`` the
    parameter gradient of the surrogate mean. With ``use_exact_mean`` the
    mean comes from the model itself and the surrogate variance is dropped.
    """
    single = np.ndim(U) == 1
    S = _check_sigma(Sigma_theta, ens.model.param_dim)
    mean, var, G, _, _, _ = ens.derivatives(U, theta_star)
    cov = np.einsum("nei,ij,nfj->nef", G, S, G)
    if use_exact_mean:
        mean = np.atleast_2d(ens.model.eval(U, theta_star))
    else:
        cov = cov + np.einsum("ne,ef->nef", var, np.eye(var.shape[1]))
    return _finish(mean, cov, single)


def marginal_taylor2(ens, U, theta_star, Sigma_theta, use_exact_mean=False):
    """Second-order Taylor marginal of the surrogate prediction (noise excluded).

    ``mean_e = mu_e + tr(H_e S)/2``; the covariance adds
    ``tr(d2 sigma_e^2 S)/2`` to each variance and ``tr(H_a S H_b S)/2`` to
    every entry of the first-order term. The result is symmetrised and any
    negative eigenvalues are clipped at zero.
    """
    single = np.ndim(U) == 1
    S = _check_sigma(Sigma_theta, ens.model.param_dim)
    mean, var, G, _, Hm, Hv = ens.derivatives(U, theta_star)
    E = mean.shape[1]
    HS = np.einsum("neij,jk->neik", Hm, S)
    correction = 0.5 * np.einsum("neii->ne", HS)
    cov = (np.einsum("nei,ij,nfj->nef", G, S, G)
           + 0.5 * np.einsum("neij,nfji->nef", HS, HS))
    if use_exact_mean:
        mean = np.atleast_2d(ens.model.eval(U, theta_star)) + correction
    else:
        mean = mean + correction
        q = var + 0.5 * np.einsum("neij,ji->ne", Hv, S)
        cov = cov + np.einsum("ne,ef->nef", q, np.eye(E))
    return _finish(mean, cov, single)


def marginal_analytic(model, U, theta_star, Sigma_theta):
    """First-order propagation through the model: ``(f, J S J^T)``."""
    single = np.ndim(U) == 1
    S = _check_sigma(Sigma_theta, model.param_dim)
    U2 = np.atleast_2d(U)
    mean = model.eval(U2, theta_star)
    J = model.param_jacobian(U2, theta_star)
    cov = np.einsum("nei,ij,nfj->nef", J, S, J)
    return _finish(mean, cov, single)
