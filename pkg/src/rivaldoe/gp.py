"""Single-output Gaussian-process regression with an RBF-ARD kernel.

The functional core (:func:`gp_fit`, :func:`sparse_fit`, :func:`gp_predict`,
:func:`gp_predict_derivatives`) works on immutable :class:`PosteriorGP`
objects. :class:`GaussianProcess` wraps it in the scikit-learn estimator
protocol.

Internally every GP works on normalised data: inputs are mapped affinely to
``[0, 1]`` per dimension and (optionally) targets are standardised. All
public predictions and derivatives are returned in original units.
"""

from dataclasses import dataclass, field
import logging

import numpy as np
from scipy.linalg import cho_solve, solve_triangular
from scipy.optimize import minimize
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import as_2d, as_bounds, as_vector
from .exceptions import ContractError, SingularKernelError

logger = logging.getLogger(__name__)

JITTER_START = 1e-10
JITTER_MAX = 1e-4
DEFAULT_LENGTH_SCALE = 0.5
_CHUNK = 512


@dataclass(frozen=True)
class KernelParams:
    """Hyperparameters of the RBF-ARD kernel.

    ``length_scales`` are stored unsquared; the kernel uses their squares.
    """

    signal_variance: float
    length_scales: np.ndarray
    noise_variance: float = 0.0

    def __post_init__(self):
        ls = np.atleast_1d(np.asarray(self.length_scales, dtype=float))
        object.__setattr__(self, "length_scales", ls)
        if not self.signal_variance > 0:
            raise ContractError("signal_variance must be strictly positive")
        if ls.ndim != 1 or ls.size == 0 or np.any(~(ls > 0)):
            raise ContractError("length_scales must be a non-empty vector of positive reals")
        if not self.noise_variance >= 0:
            raise ContractError("noise_variance must be non-negative")

    @property
    def input_dim(self):
        return self.length_scales.size

    def as_log_vector(self):
        return np.log(np.r_[self.signal_variance, self.length_scales,
                            max(self.noise_variance, 1e-300)])

    @classmethod
    def from_log_vector(cls, v):
        v = np.exp(np.asarray(v, dtype=float))
        return cls(v[0], v[1:-1], v[-1])


@dataclass(frozen=True)
class GPTrainingSet:
    inputs: np.ndarray
    targets: np.ndarray
    prior_mean: float = 0.0

    def __post_init__(self):
        X = as_2d(self.inputs, name="inputs")
        y = as_vector(self.targets, size=X.shape[0], name="targets")
        object.__setattr__(self, "inputs", X)
        object.__setattr__(self, "targets", y)


@dataclass(frozen=True)
class PosteriorGP:
    """A trained GP with everything needed for prediction cached.

    The predictive variance (normalised units) is
    ``signal_variance - sum_t coef_t * ||W_t k||^2`` where each ``W_t`` is a
    product of inverse lower-triangular factors from ``whiteners``. A full GP
    has one term (the Cholesky factor of ``K + noise I``); the sparse variant
    has two.
    """

    kernel: KernelParams
    training: GPTrainingSet
    basis: np.ndarray
    alpha: np.ndarray
    whiteners: tuple
    x_offset: np.ndarray
    x_scale: np.ndarray
    y_offset: float
    y_scale: float
    jitter: float
    log_marginal_likelihood: float
    inducing_index: np.ndarray = field(default=None)

    @property
    def input_dim(self):
        return self.kernel.input_dim

    @property
    def is_sparse(self):
        return self.inducing_index is not None

    def normalise_inputs(self, Z):
        return (Z - self.x_offset) / self.x_scale


# --------------------------------------------------------------------------
# kernel


def _check_dim(kernel, *vectors):
    for v in vectors:
        if v.shape[-1] != kernel.input_dim:
            raise ContractError(
                f"input has dimension {v.shape[-1]}, kernel expects {kernel.input_dim}")


def kernel_matrix(kernel, A, B):
    """Return the ``(len(A), len(B))`` RBF-ARD Gram block."""
    A = np.atleast_2d(A)
    B = np.atleast_2d(B)
    _check_dim(kernel, A, B)
    As = A / kernel.length_scales
    Bs = B / kernel.length_scales
    sq = (np.sum(As**2, 1)[:, None] + np.sum(Bs**2, 1)[None, :] - 2.0 * As @ Bs.T)
    np.maximum(sq, 0.0, out=sq)
    return kernel.signal_variance * np.exp(-0.5 * sq)


def kernel_eval(kernel, z, z2):
    z = np.atleast_1d(np.asarray(z, dtype=float))
    z2 = np.atleast_1d(np.asarray(z2, dtype=float))
    _check_dim(kernel, z, z2)
    d = (z - z2) / kernel.length_scales
    return float(kernel.signal_variance * np.exp(-0.5 * d @ d))


def kernel_derivatives(kernel, z_ref, z):
    """Gradient and Hessian of ``k(z_ref, z)`` with respect to ``z``."""
    z_ref = np.atleast_1d(np.asarray(z_ref, dtype=float))
    z = np.atleast_1d(np.asarray(z, dtype=float))
    _check_dim(kernel, z_ref, z)
    inv_lam = 1.0 / kernel.length_scales**2
    k = kernel_eval(kernel, z_ref, z)
    s = (z_ref - z) * inv_lam
    grad = k * s
    hess = k * (np.outer(s, s) - np.diag(inv_lam))
    return grad, hess


# --------------------------------------------------------------------------
# linear algebra


def _jittered_cholesky(K):
    """Cholesky of ``K + jitter I`` with escalating jitter; returns (L, jitter)."""
    base = float(np.mean(np.diag(K))) if K.size else 1.0
    base = base if base > 0 else 1.0
    jitter = JITTER_START * base
    eye = np.eye(K.shape[0])
    while jitter <= JITTER_MAX * base * (1 + 1e-12):
        try:
            return np.linalg.cholesky(K + jitter * eye), jitter
        except np.linalg.LinAlgError:
            jitter *= 2.0
    raise SingularKernelError(
        f"Gram matrix not positive definite with jitter up to {JITTER_MAX:g} x mean diagonal")


def _whiten(chain, M):
    for L in chain:
        M = solve_triangular(L, M, lower=True, check_finite=False)
    return M


def _whiten_transpose(chain, M):
    for L in reversed(chain):
        M = solve_triangular(L, M, lower=True, trans="T", check_finite=False)
    return M


# --------------------------------------------------------------------------
# normalisation


def _input_scaling(X, input_bounds):
    if input_bounds is None:
        lo, hi = X.min(0), X.max(0)
    else:
        b = as_bounds(input_bounds, size=X.shape[1], name="input_bounds")
        lo, hi = b[:, 0], b[:, 1]
    width = hi - lo
    width = np.where(width > 0, width, 1.0)
    return lo.astype(float), width.astype(float)


def _target_scaling(y, normalize_y, prior_mean):
    if not normalize_y:
        return float(prior_mean), 1.0
    std = float(np.std(y))
    return float(np.mean(y)), (std if std > 0 else 1.0)


def default_hyperparameter_bounds(input_dim, target_variance=1.0):
    """Default search box (normalised units) as a dict of (low, high) pairs."""
    v = target_variance if target_variance > 0 else 1.0
    return {
        "signal_variance": (1e-6 * v, 10.0 * v),
        "length_scales": [(1e-3, 10.0)] * input_dim,
        "noise_variance": (1e-8, v),
    }


def _log_bounds(init, bounds):
    """Flatten the bound dict into log-space arrays plus a free-parameter mask."""
    D = init.input_dim
    entries = [bounds.get("signal_variance")]
    ls = bounds.get("length_scales")
    if isinstance(ls, str) or ls is None:
        entries += [ls] * D
    else:
        ls = list(ls)
        if len(ls) == 2 and np.isscalar(ls[0]):
            ls = [tuple(ls)] * D
        if len(ls) != D:
            raise ContractError("length_scales bounds do not match the input dimension")
        entries += ls
    entries.append(bounds.get("noise_variance"))
    x0 = init.as_log_vector()
    free = np.ones(D + 2, dtype=bool)
    lo = np.empty(D + 2)
    hi = np.empty(D + 2)
    values = np.r_[init.signal_variance, init.length_scales, init.noise_variance]
    for i, e in enumerate(entries):
        if e is None or (isinstance(e, str) and e == "fixed"):
            free[i] = False
            lo[i] = hi[i] = x0[i]
            continue
        a, b = float(e[0]), float(e[1])
        if not (a <= values[i] * (1 + 1e-12) and values[i] <= b * (1 + 1e-12)):
            raise ContractError(
                f"initial hyperparameter {values[i]:g} outside bounds [{a:g}, {b:g}]")
        lo[i], hi[i] = np.log(max(a, 1e-300)), np.log(b)
    return x0, lo, hi, free


# --------------------------------------------------------------------------
# full GP


def _full_lml(Xn, yn, kernel, with_grad=False):
    Kf = kernel_matrix(kernel, Xn, Xn)
    N = Xn.shape[0]
    K = Kf + kernel.noise_variance * np.eye(N)
    L, jitter = _jittered_cholesky(K)
    alpha = cho_solve((L, True), yn, check_finite=False)
    lml = (-0.5 * yn @ alpha - np.sum(np.log(np.diag(L))) - 0.5 * N * np.log(2 * np.pi))
    if not with_grad:
        return lml, L, alpha, jitter
    Kinv = cho_solve((L, True), np.eye(N), check_finite=False)
    W = np.outer(alpha, alpha) - Kinv
    D = Xn.shape[1]
    grad = np.empty(D + 2)
    grad[0] = 0.5 * np.sum(W * Kf)
    for d in range(D):
        r2 = (Xn[:, d, None] - Xn[None, :, d]) ** 2 / kernel.length_scales[d] ** 2
        grad[1 + d] = 0.5 * np.sum(W * Kf * r2)
    grad[-1] = 0.5 * kernel.noise_variance * np.trace(W)
    return lml, L, alpha, jitter, grad


def log_marginal_likelihood(gp_or_training, kernel=None, input_bounds=None, normalize_y=True):
    """Log marginal likelihood (normalised units) of a training set under ``kernel``.

    Accepts either a :class:`PosteriorGP` (its own kernel is used) or a
    :class:`GPTrainingSet` plus kernel.
    """
    if isinstance(gp_or_training, PosteriorGP):
        return gp_or_training.log_marginal_likelihood
    tr = gp_or_training
    lo, w = _input_scaling(tr.inputs, input_bounds)
    yo, ys = _target_scaling(tr.targets, normalize_y, tr.prior_mean)
    return _full_lml((tr.inputs - lo) / w, (tr.targets - yo) / ys, kernel)[0]


def _optimise(objective, x0, lo, hi, free, n_restarts, rng, jac):
    """Multi-start bounded L-BFGS-B over the free log-hyperparameters."""
    def wrapped(xf):
        x = x0.copy()
        x[free] = xf
        try:
            val, g = objective(x)
        except SingularKernelError:
            return 1e25, np.zeros(free.sum())
        if not np.isfinite(val):
            return 1e25, np.zeros(free.sum())
        return val, (g[free] if g is not None else None)

    best_x = x0.copy()
    best_val = wrapped(x0[free])[0]
    if not free.any():
        return best_x, best_val
    starts = [np.clip(x0[free], lo[free], hi[free])]
    for _ in range(max(n_restarts - 1, 0)):
        starts.append(rng.uniform(lo[free], hi[free]))
    box = list(zip(lo[free], hi[free]))
    for s in starts:
        if jac:
            # With every variable boxed, L-BFGS-B's first step is the raw
            # projected gradient, which for steep starts lands on a corner of
            # the box. Scaling by the initial gradient keeps that step O(1).
            val0, g0 = wrapped(s)
            scale = max(1.0, float(np.max(np.abs(g0)))) if val0 < 1e25 else 1.0

            def scaled(v):
                val, g = wrapped(v)
                return val / scale, g / scale

            res = minimize(scaled, s, jac=True, method="L-BFGS-B", bounds=box,
                           options={"gtol": 1e-9 / scale})
            res.fun = res.fun * scale
        else:
            res = minimize(lambda v: wrapped(v)[0], s, method="L-BFGS-B", bounds=box)
        if res.fun < best_val:
            best_val = float(res.fun)
            best_x = x0.copy()
            best_x[free] = res.x
    return best_x, best_val


def _clip_to(init, bounds):
    sv = float(np.clip(init.signal_variance, *bounds["signal_variance"]))
    ls = np.clip(init.length_scales, [b[0] for b in bounds["length_scales"]],
                 [b[1] for b in bounds["length_scales"]])
    nv = init.noise_variance
    if nv > 0:
        nv = float(np.clip(nv, *bounds["noise_variance"]))
    else:
        bounds["noise_variance"] = "fixed"
    return KernelParams(sv, ls, nv)


def _resolve_init(init, input_dim):
    if init is None:
        init = KernelParams(1.0, np.full(input_dim, DEFAULT_LENGTH_SCALE), 1e-4)
    if init.input_dim != input_dim:
        raise ContractError(
            f"kernel has {init.input_dim} length scales, inputs have {input_dim} columns")
    return init


def gp_fit(training, init=None, bounds=None, *, input_bounds=None, normalize_y=True,
           n_restarts=5, optimize=True, random_state=None):
    """Train a full GP by maximising the log marginal likelihood.

    Parameters
    ----------
    training : GPTrainingSet
    init : KernelParams, optional
        Starting hyperparameters in normalised units.
    bounds : dict, optional
        ``{"signal_variance": (lo, hi), "length_scales": [(lo, hi), ...],
        "noise_variance": (lo, hi)}``; any entry may be ``"fixed"``.
    input_bounds : array-like of shape (D, 2), optional
        Declared input box used for normalisation; the data range otherwise.

    Returns
    -------
    PosteriorGP
    """
    X, y = training.inputs, training.targets
    N, D = X.shape
    lo_x, w_x = _input_scaling(X, input_bounds)
    yo, ys = _target_scaling(y, normalize_y, training.prior_mean)
    Xn = (X - lo_x) / w_x
    yn = (y - yo) / ys
    if N > 1:
        dup = _has_duplicates(Xn)
        if dup:
            raise ContractError("training inputs contain duplicate rows")
    init = _resolve_init(init, D)
    if bounds is None:
        bounds = default_hyperparameter_bounds(D, float(np.var(yn)) if N > 1 else 1.0)
        init = _clip_to(init, bounds)
    x0, lo, hi, free = _log_bounds(init, bounds)
    zero_noise = init.noise_variance == 0.0 and not free[-1]

    def unpack(v):
        k = KernelParams.from_log_vector(v)
        if zero_noise:
            k = KernelParams(k.signal_variance, k.length_scales, 0.0)
        return k

    def objective(v):
        out = _full_lml(Xn, yn, unpack(v), with_grad=True)
        return -out[0], -out[4]

    kernel = init
    if optimize and N >= 2 and free.any():
        rng = np.random.default_rng(random_state)
        best, _ = _optimise(objective, x0, lo, hi, free, n_restarts, rng, jac=True)
        kernel = unpack(best)
    lml, L, alpha, jitter = _full_lml(Xn, yn, kernel)
    logger.debug("gp_fit: N=%d D=%d lml=%.4f jitter=%.2g", N, D, lml, jitter)
    return PosteriorGP(kernel=kernel, training=training, basis=Xn, alpha=alpha,
                       whiteners=(((L,), 1.0),), x_offset=lo_x, x_scale=w_x,
                       y_offset=yo, y_scale=ys, jitter=jitter,
                       log_marginal_likelihood=float(lml))


def _has_duplicates(Xn, tol=1e-12):
    order = np.lexsort(Xn.T[::-1])
    S = Xn[order]
    return bool(np.any(np.all(np.abs(np.diff(S, axis=0)) <= tol, axis=1)))


# --------------------------------------------------------------------------
# sparse GP (deterministic training conditional with greedy subset selection)


def select_inducing(kernel, Xn, num_inducing):
    """Greedy maximum-variance subset selection (pivoted Cholesky on the prior)."""
    N = Xn.shape[0]
    diag = np.full(N, kernel.signal_variance, dtype=float)
    rows = np.zeros((num_inducing, N))
    chosen = []
    floor = 1e-12 * kernel.signal_variance
    for m in range(num_inducing):
        i = int(np.argmax(diag))
        if diag[i] <= floor:
            # the rest is numerically spanned already; take unused points in order
            rest = np.setdiff1d(np.arange(N), chosen)[: num_inducing - m]
            chosen.extend(int(j) for j in rest)
            break
        chosen.append(i)
        kcol = kernel_matrix(kernel, Xn, Xn[i:i + 1])[:, 0]
        row = (kcol - rows[:m].T @ rows[:m, i]) / np.sqrt(diag[i])
        rows[m] = row
        diag = diag - row**2
        diag[chosen] = -np.inf
    return np.array(chosen, dtype=int)


def _sparse_parts(Xn, yn, kernel, idx):
    Xu = Xn[idx]
    Kuu = kernel_matrix(kernel, Xu, Xu)
    Lm, jitter = _jittered_cholesky(Kuu)
    A = solve_triangular(Lm, kernel_matrix(kernel, Xu, Xn), lower=True, check_finite=False)
    s2 = kernel.noise_variance
    P = len(idx)
    B = s2 * np.eye(P) + A @ A.T
    LB, jb = _jittered_cholesky(B)
    c = cho_solve((LB, True), A @ yn, check_finite=False)
    return Xu, Lm, LB, A, c, max(jitter, jb)


def _sparse_lml(Xn, yn, kernel, idx):
    Xu, Lm, LB, A, c, _ = _sparse_parts(Xn, yn, kernel, idx)
    N, P = Xn.shape[0], len(idx)
    s2 = kernel.noise_variance
    if s2 <= 0:
        return -np.inf
    Ay = A @ yn
    quad = (yn @ yn - Ay @ c) / s2
    logdet = (N - P) * np.log(s2) + 2 * np.sum(np.log(np.diag(LB)))
    return -0.5 * quad - 0.5 * logdet - 0.5 * N * np.log(2 * np.pi)


def sparse_fit(training, init=None, num_inducing=None, bounds=None, *, input_bounds=None,
               normalize_y=True, n_restarts=5, optimize=True, random_state=None):
    """Train a sparse GP on ``num_inducing`` greedily selected training inputs.

    Prediction uses the deterministic-training-conditional equations, so the
    mean equals the subset-of-regressors mean and a full inducing set
    (``num_inducing == N``) reproduces the full GP exactly.
    """
    X, y = training.inputs, training.targets
    N, D = X.shape
    if num_inducing is None or not (1 <= num_inducing <= N):
        raise ContractError(f"num_inducing must be in [1, {N}], got {num_inducing}")
    lo_x, w_x = _input_scaling(X, input_bounds)
    yo, ys = _target_scaling(y, normalize_y, training.prior_mean)
    Xn = (X - lo_x) / w_x
    yn = (y - yo) / ys
    init = _resolve_init(init, D)
    if bounds is None:
        bounds = default_hyperparameter_bounds(D, float(np.var(yn)) if N > 1 else 1.0)
        init = _clip_to(init, bounds)
    x0, lo, hi, free = _log_bounds(init, bounds)
    idx = select_inducing(init, Xn, num_inducing)

    def objective(v):
        return -_sparse_lml(Xn, yn, KernelParams.from_log_vector(v), idx), None

    kernel = init
    if optimize and N >= 2 and free.any():
        rng = np.random.default_rng(random_state)
        best, _ = _optimise(objective, x0, lo, hi, free, n_restarts, rng, jac=False)
        kernel = KernelParams.from_log_vector(best)
        idx = select_inducing(kernel, Xn, num_inducing)
    Xu, Lm, LB, A, c, jitter = _sparse_parts(Xn, yn, kernel, idx)
    alpha = solve_triangular(Lm, c, lower=True, trans="T", check_finite=False)
    whiteners = (((Lm,), 1.0), ((Lm, LB), -kernel.noise_variance))
    lml = _sparse_lml(Xn, yn, kernel, idx) if kernel.noise_variance > 0 else np.nan
    return PosteriorGP(kernel=kernel, training=training, basis=Xu, alpha=alpha,
                       whiteners=whiteners, x_offset=lo_x, x_scale=w_x, y_offset=yo,
                       y_scale=ys, jitter=jitter, log_marginal_likelihood=float(lml),
                       inducing_index=idx)


# --------------------------------------------------------------------------
# prediction


def _as_inputs(gp, Z):
    Z = np.asarray(Z, dtype=float)
    single = Z.ndim == 1
    Z = np.atleast_2d(Z)
    if Z.shape[1] != gp.input_dim:
        raise ContractError(f"input has dimension {Z.shape[1]}, GP expects {gp.input_dim}")
    return Z, single


def predict_batch(gp, Z):
    """Vectorised predictive mean and variance at the rows of ``Z``."""
    Z, _ = _as_inputs(gp, Z)
    means = np.empty(len(Z))
    variances = np.empty(len(Z))
    for s in range(0, len(Z), _CHUNK):
        Zn = gp.normalise_inputs(Z[s:s + _CHUNK])
        Kb = kernel_matrix(gp.kernel, Zn, gp.basis)
        mean = Kb @ gp.alpha
        var = np.full(len(Zn), gp.kernel.signal_variance)
        for chain, coef in gp.whiteners:
            V = _whiten(chain, Kb.T)
            var -= coef * np.sum(V * V, axis=0)
        means[s:s + _CHUNK] = gp.y_offset + gp.y_scale * mean
        variances[s:s + _CHUNK] = gp.y_scale**2 * var
    return means, variances


def gp_predict(gp, z):
    """Predictive ``(mean, variance)`` at a single input vector."""
    z = np.atleast_1d(np.asarray(z, dtype=float))
    if z.ndim != 1:
        raise ContractError("gp_predict expects a single input vector")
    m, v = predict_batch(gp, z[None, :])
    return float(m[0]), float(v[0])


def predict_derivatives_batch(gp, Z, active_dims=None):
    """Mean, variance and their first/second derivatives over ``active_dims``.

    Returns
    -------
    mean, var : ndarray of shape (n,)
    dmean, dvar : ndarray of shape (n, a)
    d2mean, d2var : ndarray of shape (n, a, a)
    """
    Z, _ = _as_inputs(gp, Z)
    D = gp.input_dim
    dims = np.arange(D) if active_dims is None else np.asarray(active_dims, dtype=int)
    if dims.size and (dims.min() < 0 or dims.max() >= D):
        raise ContractError(f"active_dims {dims} outside input dimension {D}")
    n, a = len(Z), dims.size
    out = {k: np.empty(s) for k, s in [("mean", (n,)), ("var", (n,)), ("dmean", (n, a)),
                                          ("dvar", (n, a)), ("d2mean", (n, a, a)),
                                          ("d2var", (n, a, a))]}
    inv_lam = 1.0 / gp.kernel.length_scales[dims] ** 2
    P = gp.basis.shape[0]
    for s in range(0, n, _CHUNK):
        Zn = gp.normalise_inputs(Z[s:s + _CHUNK])
        m = len(Zn)
        Kb = kernel_matrix(gp.kernel, Zn, gp.basis)                  # (m, P)
        diff = (gp.basis[None, :, :] - Zn[:, None, :])[..., dims] * inv_lam  # (m, P, a)
        dK = Kb[..., None] * diff
        d2K = Kb[..., None, None] * (diff[..., :, None] * diff[..., None, :]
                                     - np.diag(inv_lam))
        mean = Kb @ gp.alpha
        dmean = np.einsum("mpa,p->ma", dK, gp.alpha)
        d2mean = np.einsum("mpab,p->mab", d2K, gp.alpha)
        var = np.full(m, gp.kernel.signal_variance)
        dvar = np.zeros((m, a))
        cross = np.zeros((m, a, a))
        u = np.zeros((P, m))
        dK_flat = dK.transpose(1, 0, 2).reshape(P, m * a)
        for chain, coef in gp.whiteners:
            V = _whiten(chain, Kb.T)                                  # (P, m)
            dV = _whiten(chain, dK_flat).reshape(P, m, a)
            var -= coef * np.sum(V * V, axis=0)
            dvar -= 2.0 * coef * np.einsum("pm,pma->ma", V, dV)
            cross += coef * np.einsum("pma,pmb->mab", dV, dV)
            u += coef * _whiten_transpose(chain, V)
        d2var = -2.0 * (np.einsum("pm,mpab->mab", u, d2K) + cross)
        sl = slice(s, s + m)
        sc = 1.0 / gp.x_scale[dims]
        out["mean"][sl] = gp.y_offset + gp.y_scale * mean
        out["var"][sl] = gp.y_scale**2 * var
        out["dmean"][sl] = gp.y_scale * dmean * sc
        out["dvar"][sl] = gp.y_scale**2 * dvar * sc
        out["d2mean"][sl] = gp.y_scale * d2mean * np.outer(sc, sc)
        out["d2var"][sl] = gp.y_scale**2 * d2var * np.outer(sc, sc)
    for k in ("d2mean", "d2var"):
        out[k] = 0.5 * (out[k] + np.swapaxes(out[k], 1, 2))
    return (out["mean"], out["var"], out["dmean"], out["dvar"], out["d2mean"], out["d2var"])


def gp_predict_derivatives(gp, z, active_dims=None):
    """``(dmean, dvar, d2mean, d2var)`` at a single input over ``active_dims``."""
    z = np.atleast_1d(np.asarray(z, dtype=float))
    res = predict_derivatives_batch(gp, z[None, :], active_dims)
    return res[2][0], res[3][0], res[4][0], res[5][0]


# --------------------------------------------------------------------------
# estimator


class GaussianProcess(BaseEstimator, RegressorMixin):
    """RBF-ARD Gaussian-process regressor.

    Parameters
    ----------
    signal_variance, length_scales, noise_variance :
        Initial hyperparameters in normalised units. ``length_scales=None``
        starts every dimension at 0.5.
    hyperparameter_bounds : dict, optional
        See :func:`gp_fit`. Defaults to :func:`default_hyperparameter_bounds`.
    input_bounds : array-like of shape (D, 2), optional
        Declared input box used for normalisation.
    normalize_y : bool
        Standardise targets before training. When False, ``prior_mean`` is
        subtracted instead.
    n_inducing : int, optional
        Use the sparse variant with this many inducing inputs.
    n_restarts : int
        Number of optimiser starts (the first is the initial guess).
    optimize : bool
        Whether to maximise the marginal likelihood at all.
    random_state : int or None
    """

    def __init__(self, signal_variance=1.0, length_scales=None, noise_variance=1e-4,
                 hyperparameter_bounds=None, input_bounds=None, normalize_y=True,
                 prior_mean=0.0, n_inducing=None, n_restarts=5, optimize=True,
                 random_state=None):
        self.signal_variance = signal_variance
        self.length_scales = length_scales
        self.noise_variance = noise_variance
        self.hyperparameter_bounds = hyperparameter_bounds
        self.input_bounds = input_bounds
        self.normalize_y = normalize_y
        self.prior_mean = prior_mean
        self.n_inducing = n_inducing
        self.n_restarts = n_restarts
        self.optimize = optimize
        self.random_state = random_state

    def fit(self, X, y):
        X = as_2d(X)
        training = GPTrainingSet(X, y, self.prior_mean)
        ls = (np.full(X.shape[1], DEFAULT_LENGTH_SCALE) if self.length_scales is None
              else np.broadcast_to(np.asarray(self.length_scales, float), (X.shape[1],)))
        init = KernelParams(self.signal_variance, ls, self.noise_variance)
        kwargs = dict(input_bounds=self.input_bounds, normalize_y=self.normalize_y,
                      n_restarts=self.n_restarts, optimize=self.optimize,
                      random_state=self.random_state)
        if self.n_inducing is None:
            self.posterior_ = gp_fit(training, init, self.hyperparameter_bounds, **kwargs)
        else:
            self.posterior_ = sparse_fit(training, init, self.n_inducing,
                                         self.hyperparameter_bounds, **kwargs)
        self.kernel_ = self.posterior_.kernel
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X, return_std=False, return_var=False):
        check_is_fitted(self, "posterior_")
        mean, var = predict_batch(self.posterior_, as_2d(X, self.n_features_in_))
        if return_var:
            return mean, var
        if return_std:
            return mean, np.sqrt(np.maximum(var, 0.0))
        return mean

    def predict_derivatives(self, X, active_dims=None):
        check_is_fitted(self, "posterior_")
        return predict_derivatives_batch(self.posterior_, as_2d(X, self.n_features_in_),
                                         active_dims)

    def log_marginal_likelihood(self):
        check_is_fitted(self, "posterior_")
        return self.posterior_.log_marginal_likelihood
