"""Closed-form portfolio solvers.

Every optimization in the pipeline reduces to linear solves against a
symmetric positive definite matrix (the covariance, possibly ridged by
eta * Q). One Cholesky factorization per matrix is shared across the
right-hand sides.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import (
    DegenerateConstraintError,
    FactorizationError,
    NormalizationError,
    ParameterError,
)
from .regularizers import RegularizerMatrix

__all__ = [
    "PortfolioWeights",
    "LagrangeInfo",
    "SpdSolver",
    "solve_mv",
    "solve_constrained",
    "solve_regularized",
    "anorm_budget",
    "normalize_to_budget",
]

_CONSTRAINT_TOL = 1e-12


def _as_matrix(q) -> np.ndarray:
    return q.q if isinstance(q, RegularizerMatrix) else np.asarray(q, dtype=float)


@dataclass(frozen=True)
class PortfolioWeights:
    """Allocation vector as solved (unnormalized) plus the risk aversion used."""

    w: np.ndarray
    gamma: float

    def __post_init__(self):
        w = np.ascontiguousarray(np.asarray(self.w, dtype=float))
        w.setflags(write=False)
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "gamma", float(self.gamma))
        if self.gamma <= 0:
            raise ParameterError("gamma must be > 0")
        if not np.all(np.isfinite(self.w)):
            raise ParameterError("weights contain non-finite entries")

    @property
    def n_assets(self) -> int:
        return self.w.size


@dataclass(frozen=True)
class LagrangeInfo:
    """Multiplier on the level constraint; binding=False for unconstrained solves."""

    multiplier: float
    binding: bool


class SpdSolver:
    """Cholesky factorization of an SPD matrix, reused across solves."""

    def __init__(self, a: np.ndarray):
        a = np.asarray(a, dtype=float)
        try:
            self._factor = cho_factor(a, lower=True, check_finite=False)
        except np.linalg.LinAlgError as exc:
            raise FactorizationError(f"matrix is not positive definite: {exc}") from exc
        self.n = a.shape[0]

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        return cho_solve(self._factor, rhs, check_finite=False)

    def trace_solve(self, m: np.ndarray) -> float:
        """tr(A^{-1} M)."""
        return float(np.trace(self.solve(m)))


def solve_mv(mu: np.ndarray, sigma, gamma: float) -> PortfolioWeights:
    """Unconstrained mean-variance weights sigma^{-1} mu / gamma."""
    if gamma <= 0:
        raise ParameterError("gamma must be > 0")
    mu = np.asarray(mu, dtype=float)
    w = SpdSolver(_as_matrix(sigma)).solve(mu) / gamma
    return PortfolioWeights(w=w, gamma=gamma)


def _constrained_weights(
    solver: SpdSolver, mu: np.ndarray, s_tilde: np.ndarray, gamma: float
) -> tuple[np.ndarray, float]:
    x_mu = solver.solve(mu)
    x_s = solver.solve(s_tilde)
    denom = float(s_tilde @ x_s)
    scale = float(s_tilde @ s_tilde)
    if denom <= _CONSTRAINT_TOL * max(scale, 1e-300):
        raise DegenerateConstraintError(
            "centered score vector is numerically zero under the solve metric"
        )
    multiplier = -float(mu @ x_s) / denom
    w = (x_mu + multiplier * x_s) / gamma
    return w, multiplier


def solve_constrained(
    mu: np.ndarray, sigma, s_tilde: np.ndarray, gamma: float
) -> tuple[PortfolioWeights, LagrangeInfo]:
    """Mean-variance weights under the linear level constraint w' s_tilde = 0."""
    if gamma <= 0:
        raise ParameterError("gamma must be > 0")
    mu = np.asarray(mu, dtype=float)
    s_tilde = np.asarray(s_tilde, dtype=float)
    solver = SpdSolver(_as_matrix(sigma))
    w, xi = _constrained_weights(solver, mu, s_tilde, gamma)
    return PortfolioWeights(w=w, gamma=gamma), LagrangeInfo(multiplier=xi, binding=True)


def solve_regularized(
    mu_hat: np.ndarray,
    sigma_hat,
    eta: float,
    q,
    s_tilde_hat: np.ndarray = None,
    gamma: float = 1.0,
) -> tuple[PortfolioWeights, LagrangeInfo]:
    """Weights for the ridged problem with covariance sigma_hat + eta * Q.

    With ``s_tilde_hat`` given, the level constraint is imposed and the
    multiplier returned as binding; with ``None`` the unconstrained ridged
    solution is returned. Passing population inputs for the mean and/or
    score vector yields the corresponding mixed-information variants.
    """
    if gamma <= 0:
        raise ParameterError("gamma must be > 0")
    if eta < 0:
        raise ParameterError("eta must be >= 0")
    mu_hat = np.asarray(mu_hat, dtype=float)
    a = _as_matrix(sigma_hat) + eta * _as_matrix(q)
    solver = SpdSolver(a)
    if s_tilde_hat is None:
        w = solver.solve(mu_hat) / gamma
        return PortfolioWeights(w=w, gamma=gamma), LagrangeInfo(multiplier=0.0, binding=False)
    s_tilde_hat = np.asarray(s_tilde_hat, dtype=float)
    w, zeta = _constrained_weights(solver, mu_hat, s_tilde_hat, gamma)
    return PortfolioWeights(w=w, gamma=gamma), LagrangeInfo(multiplier=zeta, binding=True)


def anorm_budget(weights: PortfolioWeights, q) -> float:
    """Quadratic budget w' Q w implied by the solved weights."""
    qm = _as_matrix(q)
    if qm.shape[0] != weights.n_assets:
        raise ParameterError("dimension mismatch between weights and Q")
    return float(weights.w @ qm @ weights.w)


def normalize_to_budget(weights: PortfolioWeights) -> PortfolioWeights:
    """Scale weights so they sum to one (reporting convention only)."""
    total = float(weights.w.sum())
    if abs(total) <= 1e-12 * max(np.abs(weights.w).sum(), 1e-300):
        raise NormalizationError("weights sum to zero; cannot scale to unit budget")
    return PortfolioWeights(w=weights.w / total, gamma=weights.gamma)
