"""Bundled model-discrimination case studies, addressable by name."""

from dataclasses import dataclass

import numpy as np

from .._validation import as_covariance, as_vector
from ..exceptions import ContractError
from ..models import _check_box
from . import ammonia, kinetics, mixing
from .expint import exponential_integral, scaled_exponential_integral

__all__ = [
    "CaseStudy",
    "get_case_study",
    "simulate_observation",
    "exponential_integral",
    "scaled_exponential_integral",
    "CASE_STUDIES",
]


@dataclass(frozen=True, eq=False)
class CaseStudy:
    """Rival models plus the configuration that generates synthetic data.

    ``true_model`` is a zero-based index into ``models``.
    """

    name: str
    models: tuple
    true_model: int
    true_theta: np.ndarray
    noise_covariance: np.ndarray
    n_initial: int
    budget: int
    alternate_binary: bool = False

    def __post_init__(self):
        if not 0 <= self.true_model < len(self.models):
            raise ContractError(f"true_model {self.true_model} out of range")
        m = self.models[self.true_model]
        theta = as_vector(self.true_theta, m.param_dim, "true_theta")
        _check_box(theta[None], m.param_bounds, "true_theta")
        object.__setattr__(self, "true_theta", theta)
        object.__setattr__(self, "models", tuple(self.models))
        object.__setattr__(self, "noise_covariance",
                           as_covariance(self.noise_covariance, m.output_dim, "noise", strict=True))

    @property
    def design_bounds(self):
        return self.models[0].design_bounds

    @property
    def binary_dims(self):
        return self.models[0].binary_dims

    @property
    def n_outputs(self):
        return self.models[0].output_dim

    def true_response(self, U):
        return self.models[self.true_model].eval(U, self.true_theta)

    def sample_designs(self, n, rng):
        """Uniform random designs; binary variables are fair coin flips."""
        b = self.design_bounds
        U = b[:, 0] + rng.random((n, len(b))) * (b[:, 1] - b[:, 0])
        if self.binary_dims:
            U[:, self.binary_dims] = rng.integers(0, 2, size=(n, len(self.binary_dims)))
        return U

    def initial_designs(self, rng):
        U = self.sample_designs(self.n_initial, rng)
        if self.alternate_binary and self.binary_dims:
            U[:, self.binary_dims[0]] = np.arange(self.n_initial) % 2
        return U

    def design_grid(self, points_per_dim):
        """Full factorial grid: ``points_per_dim`` levels per continuous dim, {0, 1} per binary dim."""
        b = self.design_bounds
        axes = [np.array([0.0, 1.0]) if d in self.binary_dims
                else np.linspace(b[d, 0], b[d, 1], points_per_dim) for d in range(len(b))]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)


def simulate_observation(cs, u, rng, noise=True):
    """Noisy observation(s) of the data-generating model at design(s) ``u``."""
    u = np.asarray(u, dtype=float)
    f = np.atleast_2d(cs.true_response(u))
    if noise:
        L = np.linalg.cholesky(cs.noise_covariance)
        f = f + rng.standard_normal(f.shape) @ L.T
    return f[0] if u.ndim == 1 else f


def _mixing(true_model=3, true_theta=None):
    i = int(true_model)
    if not 1 <= i <= 5:
        raise ContractError("mixing has models 1 to 5")
    theta = (mixing.TRUE_THETA[i - 1],) if true_theta is None else true_theta
    return CaseStudy("mixing", tuple(mixing.models()), i - 1, theta,
                     [[mixing.NOISE_VARIANCE]], n_initial=2, budget=20,
                     alternate_binary=True)


def _needs_theta(name, true_model, true_theta):
    if int(true_model) != 1 and true_theta is None:
        raise ContractError(f"{name}: pass true_theta when generating data from model {true_model}")


def _ammonia(true_model=1, true_theta=None):
    _needs_theta("ammonia", true_model, true_theta)
    theta = ammonia.TRUE_THETA if true_theta is None else true_theta
    return CaseStudy("ammonia", tuple(ammonia.models()), int(true_model) - 1, theta,
                     [[ammonia.NOISE_VARIANCE]], n_initial=5, budget=40)


def _kinetics(true_model=1, true_theta=None):
    _needs_theta("kinetics", true_model, true_theta)
    theta = kinetics.TRUE_THETA if true_theta is None else true_theta
    return CaseStudy("kinetics", tuple(kinetics.models()), int(true_model) - 1, theta,
                     kinetics.NOISE_COVARIANCE, n_initial=5, budget=40)


CASE_STUDIES = {"mixing": _mixing, "ammonia": _ammonia, "kinetics": _kinetics}


def get_case_study(name, true_model=None, true_theta=None):
    """Build a case study by name; ``true_model`` is 1-based."""
    try:
        factory = CASE_STUDIES[name]
    except KeyError:
        raise ContractError(f"unknown case study {name!r}; choose from {sorted(CASE_STUDIES)}") from None
    kw = {"true_theta": true_theta}
    if true_model is not None:
        kw["true_model"] = true_model
    return factory(**kw)
