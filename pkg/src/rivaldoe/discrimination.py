"""Sequential model discrimination: posteriors, chi-square tests, Akaike weights.

A :class:`DiscriminationState` is an immutable value; every update returns
a new state. Model indices are zero-based.
"""

from dataclasses import dataclass, replace

import numpy as np
from scipy.special import gammaincc, logsumexp

from ._validation import as_covariance, as_vector
from .exceptions import ContractError, RenormalisationError

METHODS = ("posteriors", "chi2", "akaike")

_LOG_2PI = np.log(2.0 * np.pi)


@dataclass(frozen=True)
class DiscriminationState:
    """Adequacy bookkeeping for M rival models.

    Attributes
    ----------
    posteriors : (M,) normalised model posteriors, zero for rejected models
    chi2_stats : (M,) noise-weighted residual sums of squares
    dof : (M,) chi-square degrees of freedom ``N E - D_i``
    akaike_weights : (M,) data-side Akaike weights
    alive : (M,) bool, False once a model is rejected by the chi-square test
    n_observations : int
    param_counts : (M,) int
    n_outputs : int
    """

    posteriors: np.ndarray
    chi2_stats: np.ndarray
    dof: np.ndarray
    akaike_weights: np.ndarray
    alive: np.ndarray
    n_observations: int
    param_counts: np.ndarray
    n_outputs: int

    @property
    def n_models(self):
        return len(self.posteriors)

    def to_dict(self):
        return {"posteriors": self.posteriors.tolist(), "chi2_stats": self.chi2_stats.tolist(),
                "dof": self.dof.tolist(), "akaike_weights": self.akaike_weights.tolist(),
                "alive": self.alive.tolist(), "n_observations": int(self.n_observations)}


def initial_state(param_counts, n_outputs, n_observations=0, priors=None):
    """Uniform (or given) posteriors, zero statistics, every model alive."""
    D = np.asarray(param_counts, dtype=int)
    M = len(D)
    if M < 1:
        raise ContractError("need at least one model")
    p = np.full(M, 1.0 / M) if priors is None else as_vector(priors, M, "priors")
    if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-10:
        raise ContractError("priors must be non-negative and sum to one")
    return DiscriminationState(
        posteriors=p, chi2_stats=np.zeros(M), dof=n_observations * n_outputs - D,
        akaike_weights=np.full(M, 1.0 / M), alive=np.ones(M, dtype=bool),
        n_observations=int(n_observations), param_counts=D, n_outputs=int(n_outputs))


def gaussian_logpdf(y, mean, cov):
    """Log density of ``y`` under ``N(mean, cov)``."""
    y, mean = np.atleast_1d(y), np.atleast_1d(mean)
    L = np.linalg.cholesky(np.atleast_2d(cov))
    z = np.linalg.solve(L, y - mean)
    return float(-0.5 * z @ z - np.log(np.diag(L)).sum() - 0.5 * len(y) * _LOG_2PI)


def update_posteriors(state, predictions, y):
    """Bayes update of the model posteriors with one observation.

    Parameters
    ----------
    state : DiscriminationState
    predictions : sequence of M GaussianPrediction
        Marginal predictions at the observed design, noise included.
    y : array of shape (E,)

    Raises
    ------
    RenormalisationError
        When every alive model assigns zero density to ``y``.
    """
    y = as_vector(y, state.n_outputs, "y")
    if len(predictions) != state.n_models:
        raise ContractError("need one prediction per model")
    logp = np.full(state.n_models, -np.inf)
    for i, p in enumerate(predictions):
        if state.alive[i] and state.posteriors[i] > 0:
            logp[i] = np.log(state.posteriors[i]) + gaussian_logpdf(y, p.mean, p.covariance)
    total = logsumexp(logp)
    if not np.isfinite(total):
        raise RenormalisationError("every model density underflowed; posteriors unchanged")
    return replace(state, posteriors=np.exp(logp - total))


def chi2_survival(stat, dof):
    """Upper-tail chi-square probability ``P(X >= stat)``; 1 where ``dof <= 0``."""
    stat = np.asarray(stat, dtype=float)
    dof = np.asarray(dof, dtype=float)
    out = np.ones(np.broadcast(stat, dof).shape)
    ok = np.broadcast_to(dof > 0, out.shape)
    out[ok] = gammaincc(np.broadcast_to(dof, out.shape)[ok] / 2.0,
                        np.broadcast_to(np.maximum(stat, 0.0), out.shape)[ok] / 2.0)
    return out if out.ndim else float(out)


def _chi2_test(state, stats, n_obs, threshold):
    if not 0.0 < threshold < 1.0:
        raise ContractError("chi-square threshold must lie in (0, 1)")
    dof = n_obs * state.n_outputs - state.param_counts
    p = chi2_survival(stats, dof)
    alive = state.alive & ~((dof > 0) & (p <= threshold))
    post = np.where(alive, state.posteriors, 0.0)
    post = post / post.sum() if post.sum() > 0 else post
    return replace(state, chi2_stats=stats, dof=dof, alive=alive, n_observations=int(n_obs),
                   posteriors=post)


def chi2_update_and_test(state, model_means, y, noise, threshold=0.01):
    """Accumulate one observation's weighted squared residual and retest.

    ``model_means`` is (M, E): each model's prediction at its current
    estimate. A model is rejected once its chi-square survival probability
    falls to ``threshold`` or below; models with ``N E <= D_i`` are exempt.
    """
    y = as_vector(y, state.n_outputs, "y")
    F = np.asarray(model_means, dtype=float).reshape(state.n_models, state.n_outputs)
    S = as_covariance(noise, state.n_outputs, "noise", strict=True)
    R = y[None] - F
    q = np.einsum("me,ef,mf->m", R, np.linalg.inv(S), R)
    return _chi2_test(state, state.chi2_stats + q, state.n_observations + 1, threshold)


def chi2_refit_and_test(state, residual_sse, n_observations, threshold=0.01):
    """Chi-square test with statistics recomputed from refitted models.

    ``residual_sse`` holds each model's noise-weighted SSE over all
    ``n_observations`` data points at its latest estimate.
    """
    sse = as_vector(residual_sse, state.n_models, "residual_sse")
    if np.any(sse < 0):
        raise ContractError("residual SSE must be non-negative")
    return _chi2_test(state, sse, int(n_observations), threshold)


def akaike_discrimination_weights(state, model_residual_sse, param_counts=None):
    """Akaike weights from data residuals: softmax of ``-(SSE_i + 2 D_i) / 2``."""
    sse = as_vector(model_residual_sse, state.n_models, "model_residual_sse")
    if np.any(sse < 0):
        raise ContractError("residual SSE must be non-negative")
    D = state.param_counts if param_counts is None else np.asarray(param_counts, dtype=float)
    aic = sse + 2.0 * D
    z = -0.5 * (aic - aic.min())
    return np.exp(z - logsumexp(z))


@dataclass(frozen=True)
class Decision:
    """``kind`` is one of winner, all_rejected, inconclusive or continue."""

    kind: str
    winner: int = None

    @property
    def terminal(self):
        return self.kind != "continue"


def method_weights(state, method):
    """Model weights used by the design criteria under a discrimination method."""
    if method == "posteriors":
        return state.posteriors
    if method == "akaike":
        return state.akaike_weights
    if method == "chi2":
        return state.alive / max(state.alive.sum(), 1)
    raise ContractError(f"unknown discrimination method {method!r}; expected one of {METHODS}")


def check_termination(state, method, budget_left, threshold=0.999):
    """Decide whether a campaign stops and why.

    ``threshold`` applies to posteriors and Akaike weights; the chi-square
    method stops when at most one model survives.
    """
    if method == "chi2":
        n_alive = int(state.alive.sum())
        if n_alive == 1:
            return Decision("winner", int(np.flatnonzero(state.alive)[0]))
        if n_alive == 0:
            return Decision("all_rejected")
    else:
        w = method_weights(state, method)
        best = int(np.argmax(w))
        if w[best] >= threshold:
            return Decision("winner", best)
    return Decision("inconclusive") if budget_left <= 0 else Decision("continue")
