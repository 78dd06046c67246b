"""Rival model container with vectorised evaluation and parameter Jacobians."""

from dataclasses import dataclass, field
from itertools import product

import numpy as np

from ._validation import as_bounds
from .exceptions import CapabilityError, ContractError, ModelEvaluationError


@dataclass(frozen=True, eq=False)
class RivalModel:
    """A candidate model ``y = f(u, theta)``.

    Parameters
    ----------
    name : str
    func : callable
        ``func(U, Theta) -> F`` with ``U`` of shape (n, D), ``Theta`` of shape
        (n, D_i) and ``F`` of shape (n, E). Rows are independent.
    design_bounds : array-like of shape (D, 2)
    param_bounds : array-like of shape (D_i, 2)
    output_dim : int
    binary_dims : tuple of int
        Zero-based indices of design variables restricted to {0, 1}.
    jacobian : callable, optional
        ``jacobian(U, Theta) -> J`` of shape (n, E, D_i).
    finite_differences : bool
        Allow a central-difference Jacobian when ``jacobian`` is missing.
    """

    name: str
    func: object
    design_bounds: np.ndarray
    param_bounds: np.ndarray
    output_dim: int = 1
    binary_dims: tuple = ()
    jacobian: object = None
    finite_differences: bool = True
    fd_step: float = field(default=1e-6)

    def __post_init__(self):
        object.__setattr__(self, "design_bounds", as_bounds(self.design_bounds, name="design_bounds"))
        object.__setattr__(self, "param_bounds", as_bounds(self.param_bounds, name="param_bounds"))
        binary = tuple(int(d) for d in self.binary_dims)
        if any(d < 0 or d >= self.design_dim for d in binary):
            raise ContractError(f"binary_dims {binary} out of range for D={self.design_dim}")
        object.__setattr__(self, "binary_dims", binary)

    @property
    def design_dim(self):
        return self.design_bounds.shape[0]

    @property
    def param_dim(self):
        return self.param_bounds.shape[0]

    @property
    def continuous_dims(self):
        return tuple(d for d in range(self.design_dim) if d not in self.binary_dims)

    def binary_combinations(self):
        return list(product((0, 1), repeat=len(self.binary_dims)))

    def _prepare(self, U, theta):
        U = np.asarray(U, dtype=float)
        single = U.ndim == 1
        U = np.atleast_2d(U)
        if U.shape[1] != self.design_dim:
            raise ContractError(f"{self.name}: design has {U.shape[1]} columns, expected {self.design_dim}")
        T = np.atleast_2d(np.asarray(theta, dtype=float))
        if T.shape[1] != self.param_dim:
            raise ContractError(f"{self.name}: theta has {T.shape[1]} entries, expected {self.param_dim}")
        n = max(U.shape[0], T.shape[0])
        try:
            U = np.broadcast_to(U, (n, self.design_dim))
            T = np.broadcast_to(T, (n, self.param_dim))
        except ValueError as exc:
            raise ContractError(f"{self.name}: cannot broadcast designs against parameters") from exc
        _check_box(U, self.design_bounds, f"{self.name}: design")
        _check_box(T, self.param_bounds, f"{self.name}: parameter")
        if self.binary_dims:
            b = U[:, self.binary_dims]
            if not np.all((b == 0) | (b == 1)):
                raise ContractError(f"{self.name}: binary design variables must be 0 or 1")
        return U, T, single

    def eval(self, U, theta):
        """Evaluate the model; returns (n, E), or (E,) for a single design."""
        U, T, single = self._prepare(U, theta)
        with np.errstate(all="ignore"):
            F = np.asarray(self.func(U, T), dtype=float).reshape(len(U), self.output_dim)
        if not np.all(np.isfinite(F)):
            bad = np.flatnonzero(~np.all(np.isfinite(F), axis=1))[0]
            raise ModelEvaluationError(
                f"{self.name}: non-finite output at u={U[bad].tolist()}, theta={T[bad].tolist()}")
        return F[0] if single else F

    __call__ = eval

    def param_jacobian(self, U, theta):
        """Jacobian with respect to the parameters, shape (n, E, D_i) or (E, D_i)."""
        U, T, single = self._prepare(U, theta)
        if self.jacobian is not None:
            with np.errstate(all="ignore"):
                J = np.asarray(self.jacobian(U, T), dtype=float).reshape(
                    len(U), self.output_dim, self.param_dim)
            if not np.all(np.isfinite(J)):
                raise ModelEvaluationError(f"{self.name}: non-finite parameter Jacobian")
        elif self.finite_differences:
            J = self.fd_jacobian(U, T)
        else:
            raise CapabilityError(f"{self.name} has no parameter Jacobian and finite differences are disabled")
        return J[0] if single else J

    def fd_jacobian(self, U, theta):
        """Central differences with step ``fd_step`` times the bound width.

        Steps that would leave the parameter box fall back to one-sided
        differences.
        """
        U, T, _ = self._prepare(U, theta)
        lo, hi = self.param_bounds[:, 0], self.param_bounds[:, 1]
        h = self.fd_step * np.maximum(hi - lo, 1e-12)
        J = np.empty((len(U), self.output_dim, self.param_dim))
        f0 = None
        for k in range(self.param_dim):
            up = T.copy()
            dn = T.copy()
            can_up = T[:, k] + h[k] <= hi[k]
            can_dn = T[:, k] - h[k] >= lo[k]
            up[:, k] = np.where(can_up, T[:, k] + h[k], T[:, k])
            dn[:, k] = np.where(can_dn, T[:, k] - h[k], T[:, k])
            span = (up[:, k] - dn[:, k])[:, None]
            if np.any(span == 0):
                raise ContractError(f"{self.name}: parameter box too narrow for finite differences")
            J[:, :, k] = (self.eval(U, up) - self.eval(U, dn)) / span
        return J


def _check_box(X, bounds, what, tol=1e-9):
    width = np.maximum(bounds[:, 1] - bounds[:, 0], 1.0)
    low = X < bounds[:, 0] - tol * width
    high = X > bounds[:, 1] + tol * width
    if np.any(low | high):
        row, col = np.argwhere(low | high)[0]
        raise ContractError(f"{what} {col} = {X[row, col]!r} outside {bounds[col].tolist()}")
