"""Design criteria for model discrimination.

Every criterion accepts a :class:`PredictiveSet` whose arrays may carry a
leading batch axis of candidate designs: ``means`` is ``(M, E)`` or
``(n, M, E)`` and ``covs`` is ``(M, E, E)`` or ``(n, M, E, E)``. The return
value is a float for a single design and an ``(n,)`` array otherwise.

Covariances are the full observation covariances (model plus noise).
"""

from dataclasses import dataclass
from itertools import combinations

import numpy as np
from scipy.special import logsumexp

from .exceptions import ContractError, NumericalError

_LOG_2PI = np.log(2.0 * np.pi)
_LOG_4PI = np.log(4.0 * np.pi)


@dataclass(frozen=True)
class PredictiveSet:
    """Gaussian predictions of M rival models at one or many designs.

    Parameters
    ----------
    means : array of shape (M, E) or (n, M, E)
    covs : array of shape (M, E, E) or (n, M, E, E)
        Observation covariances, experimental noise already added.
    weights : array of shape (M,), optional
        Model weights summing to one; uniform when omitted.
    param_counts : array of shape (M,), optional
        Number of parameters of each model (Akaike weights).
    hr_scaling : array of shape (E, E), optional
        Diagonal scaling matrix of the Hunter-Reiner criterion; identity when
        omitted.
    active : bool array of shape (M,), optional
        Models still in the running. Inactive models are dropped and the
        weights of the rest renormalised.
    """

    means: np.ndarray
    covs: np.ndarray
    weights: np.ndarray = None
    param_counts: np.ndarray = None
    hr_scaling: np.ndarray = None
    active: np.ndarray = None

    def __post_init__(self):
        mu = np.asarray(self.means, dtype=float)
        S = np.asarray(self.covs, dtype=float)
        if mu.ndim == 2:
            mu, S = mu[None], S[None]
            object.__setattr__(self, "_single", True)
        else:
            object.__setattr__(self, "_single", False)
        if mu.ndim != 3 or S.ndim != 4 or S.shape[:3] != mu.shape or S.shape[3] != mu.shape[2]:
            raise ContractError(f"inconsistent shapes: means {mu.shape}, covs {S.shape}")
        n, M, E = mu.shape
        if M < 1:
            raise ContractError("need at least one model")
        act = (np.ones(M, dtype=bool) if self.active is None
               else np.asarray(self.active, dtype=bool))
        if act.shape != (M,):
            raise ContractError("active mask has the wrong length")
        w = np.full(M, 1.0 / M) if self.weights is None else np.asarray(self.weights, float)
        if w.shape != (M,) or np.any(w < 0):
            raise ContractError("weights must be M non-negative reals")
        if self.weights is not None and self.active is None and abs(w.sum() - 1.0) > 1e-10:
            raise ContractError(f"weights sum to {w.sum()!r}, expected 1")
        w = np.where(act, w, 0.0)
        total = w.sum()
        if total <= 0:
            w = act / act.sum() if act.any() else w
        else:
            w = w / total
        D = (np.zeros(M) if self.param_counts is None
             else np.asarray(self.param_counts, dtype=float))
        Q = np.eye(E) if self.hr_scaling is None else np.atleast_2d(np.asarray(self.hr_scaling, float))
        if Q.shape != (E, E):
            raise ContractError("hr_scaling must be E x E")
        if not np.all(np.isfinite(mu)) or not np.all(np.isfinite(S)):
            raise ContractError("predictions contain non-finite values")
        S = 0.5 * (S + np.swapaxes(S, -1, -2))
        if act.any() and np.linalg.eigvalsh(S[:, act]).min() <= 1e-12:
            raise ContractError("an observation covariance is singular")
        object.__setattr__(self, "means", mu[:, act])
        object.__setattr__(self, "covs", S[:, act])
        object.__setattr__(self, "weights", w[act])
        object.__setattr__(self, "param_counts", D[act])
        object.__setattr__(self, "hr_scaling", Q)
        object.__setattr__(self, "active", act)

    @property
    def n_models(self):
        return self.means.shape[1]

    @property
    def n_outputs(self):
        return self.means.shape[2]

    def _out(self, values):
        values = np.asarray(values, dtype=float)
        if not np.all(np.isfinite(values)):
            raise NumericalError("design criterion produced non-finite values")
        return float(values[0]) if self._single else values


def _cholesky(S):
    try:
        return np.linalg.cholesky(S)
    except np.linalg.LinAlgError as exc:
        raise ContractError("covariance matrix is not positive definite") from exc


def _logdet(S):
    L = _cholesky(S)
    return 2.0 * np.sum(np.log(np.diagonal(L, axis1=-2, axis2=-1)), axis=-1)


def _inv(S):
    _cholesky(S)
    return np.linalg.inv(S)


def _quad(A, d):
    """``d^T A d`` over the batch axes."""
    return np.einsum("...i,...ij,...j->...", d, A, d)


# --------------------------------------------------------------------------
# classical criteria


def d_hr(ps):
    """Sum of pairwise scaled squared distances between predictive means."""
    mu, Q = ps.means, ps.hr_scaling
    total = np.zeros(mu.shape[0])
    for i, j in combinations(range(ps.n_models), 2):
        total += _quad(Q, mu[:, i] - mu[:, j])
    return ps._out(total)


def d_bh(ps):
    """Weighted pairwise divergence bound (Box-Hill form)."""
    mu, S, w = ps.means, ps.covs, ps.weights
    E = ps.n_outputs
    Sinv = _inv(S)
    total = np.zeros(mu.shape[0])
    for i, j in combinations(range(ps.n_models), 2):
        tr = (np.einsum("nab,nba->n", S[:, i], Sinv[:, j])
              + np.einsum("nab,nba->n", S[:, j], Sinv[:, i]) - 2.0 * E)
        d = mu[:, i] - mu[:, j]
        total += w[i] * w[j] * (tr + _quad(Sinv[:, i] + Sinv[:, j], d))
    return ps._out(total)


def d_bf(ps, noise):
    """Pairwise cross-covariance heuristic (Buzzi-Ferraris form).

    ``noise`` is the experimental noise covariance (E x E).
    """
    mu, S = ps.means, ps.covs
    noise = np.atleast_2d(np.asarray(noise, dtype=float))
    if noise.shape != (ps.n_outputs, ps.n_outputs):
        raise ContractError("noise covariance has the wrong shape")
    total = np.zeros(mu.shape[0])
    for i, j in combinations(range(ps.n_models), 2):
        Sij_inv = _inv(S[:, i] + S[:, j])
        d = mu[:, i] - mu[:, j]
        total += 2.0 * np.einsum("ab,nba->n", noise, Sij_inv) + _quad(Sij_inv, d)
    return ps._out(total)


def _log_akaike_design_weights(ps):
    mu, S, D = ps.means, ps.covs, ps.param_counts
    Sinv = _inv(S)
    d = mu[:, :, None, :] - mu[:, None, :, :]               # (n, i, j, E)
    quad = np.einsum("nije,nief,nijf->nij", d, Sinv, d)
    expo = -0.5 * quad + D[None, :, None] - D[None, None, :]
    return -logsumexp(expo, axis=2)                          # (n, M)


def akaike_design_weights(ps):
    """Prediction-difference Akaike weights, one per (active) model."""
    w = np.exp(_log_akaike_design_weights(ps))
    return w[0] if ps._single else w


def d_aw(ps, priors=None):
    """Akaike-weighted design criterion ``sum_i w_i p_i``.

    ``priors`` defaults to the set's weights; given explicitly it must have
    one entry per model including inactive ones.
    """
    if priors is None:
        p = ps.weights
    else:
        p = np.asarray(priors, dtype=float)
        if p.shape != ps.active.shape or np.any(p < 0):
            raise ContractError("priors must be M non-negative reals")
        p = p[ps.active]
    w = np.exp(_log_akaike_design_weights(ps))
    return ps._out(w @ p)


# --------------------------------------------------------------------------
# quadratic Renyi entropy and Jensen-Renyi divergence


def renyi_entropy_gaussian(cov):
    """Quadratic Renyi entropy of a Gaussian with covariance ``cov``."""
    S = np.atleast_2d(np.asarray(cov, dtype=float))
    E = S.shape[-1]
    return 0.5 * E * _LOG_4PI + 0.5 * _logdet(S)


def _mixture_entropy(mu, S, w):
    """Batched quadratic Renyi entropy of ``sum_i w_i N(mu_i, S_i)``."""
    n, M, E = mu.shape
    logdet = _logdet(S)                                      # (n, M)
    with np.errstate(divide="ignore"):
        logw = np.log(w)
    terms = [2.0 * logw[None, :] - 0.5 * E * np.log(2.0) - 0.5 * logdet]
    for i in range(M):
        for j in range(i):
            if w[i] == 0 or w[j] == 0:
                continue
            Sij = S[:, i] + S[:, j]
            d = mu[:, i] - mu[:, j]
            phi = _logdet(Sij) + _quad(_inv(Sij), d)
            terms.append((np.log(2.0) + logw[i] + logw[j] - 0.5 * phi)[:, None])
    stacked = np.concatenate(terms, axis=1)
    return 0.5 * E * _LOG_2PI - logsumexp(stacked, axis=1)


def renyi_entropy_mixture(ps):
    """Quadratic Renyi entropy of the weighted Gaussian mixture in ``ps``."""
    return ps._out(_mixture_entropy(ps.means, ps.covs, ps.weights))


def d_jr(ps):
    """Quadratic Jensen-Renyi divergence of the weighted predictive mixture."""
    E = ps.n_outputs
    mix = _mixture_entropy(ps.means, ps.covs, ps.weights)
    comp = 0.5 * E * _LOG_4PI + 0.5 * _logdet(ps.covs)       # (n, M)
    return ps._out(mix - comp @ ps.weights)


CRITERIA = ("HR", "BH", "BF", "AW", "JR")


def evaluate(name, ps, noise=None, priors=None):
    """Dispatch a criterion by its short name."""
    name = name.upper()
    if name == "HR":
        return d_hr(ps)
    if name == "BH":
        return d_bh(ps)
    if name == "BF":
        if noise is None:
            raise ContractError("BF needs the noise covariance")
        return d_bf(ps, noise)
    if name == "AW":
        return d_aw(ps, priors)
    if name == "JR":
        return d_jr(ps)
    raise ContractError(f"unknown design criterion {name!r}; expected one of {CRITERIA}")
