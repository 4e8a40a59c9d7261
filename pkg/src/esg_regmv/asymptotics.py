"""Deterministic-equivalent machinery for the ridged portfolio.

The resolvent of the sample covariance concentrates around matrices built
from a scalar fixed point s0:

    G = (Sigma / (1 + s0) + eta * Q)^{-1},     H = G Sigma G,
    s0 = (c / p) * tr[Sigma * G],

with c = p / T the aspect ratio. A companion scalar s1 solves the linear
relation s1 = (s1 / (1 + s0)^2 - 1) * (c / p) * tr[Sigma G Sigma G] and
enters through the variance-inflation factor 1 - s1 / (1 + s0)^2.

All trace functionals are evaluated on the generalized eigenvalues of the
pencil (Sigma, Q), so the fixed-point iteration costs O(p) per step after
one O(p^3) factorization.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import (
    DegenerateRiskError,
    FixedPointError,
    NumericalError,
    ParameterError,
    SingularityError,
)
from .oracle import PopulationModel
from .regularizers import RegularizerMatrix
from .solvers import SpdSolver

__all__ = [
    "AsymptoticState",
    "solve_s0",
    "solve_s1",
    "deterministic_equivalents",
    "limit_sr",
    "prop2_limits",
    "LIMIT_KINDS",
]

LIMIT_KINDS = ("full", "mixed", "pop-mean", "unconstrained")

_S0_TOL = 1e-12
_S0_MAX_ITER = 10_000
_S0_DAMP = 0.5


def _as_matrix(q) -> np.ndarray:
    return q.q if isinstance(q, RegularizerMatrix) else np.asarray(q, dtype=float)


@dataclass(frozen=True)
class AsymptoticState:
    """Converged fixed points and assembled resolvent matrices."""

    s0: float
    s1: float
    g: np.ndarray
    h: np.ndarray
    eta: float
    c: float

    @property
    def correction(self) -> float:
        return 1.0 - self.s1 / (1.0 + self.s0) ** 2


def _pencil_eigs(sigma, q) -> np.ndarray:
    """Generalized eigenvalues of (Sigma, Q), clipped at zero."""
    sigma = np.asarray(sigma, dtype=float)
    qm = _as_matrix(q)
    lam = scipy.linalg.eigh((sigma + sigma.T) / 2.0, qm, eigvals_only=True)
    return np.maximum(lam, 0.0)


def _s0_from_eigs(lam: np.ndarray, eta: float, c: float, p: int) -> float:
    """Damped fixed-point iteration on s0 using pencil eigenvalues.

    tr[Sigma (Sigma/(1+s0) + eta Q)^{-1}] = sum lam_i / (lam_i/(1+s0) + eta).
    """
    def rhs(s0: float) -> float:
        return c / p * float(np.sum(lam / (lam / (1.0 + s0) + eta)))

    s0 = 0.0
    for _ in range(_S0_MAX_ITER):
        nxt = (1.0 - _S0_DAMP) * s0 + _S0_DAMP * rhs(s0)
        if abs(nxt - rhs(nxt)) <= _S0_TOL:
            return nxt
        s0 = nxt
    raise FixedPointError(
        f"s0 iteration did not converge; last residual {abs(s0 - rhs(s0)):.3e}"
    )


def solve_s0(sigma, q, eta: float, c: float) -> float:
    """Unique root of s0 = (c/p) tr[Sigma (Sigma/(1+s0) + eta Q)^{-1}]."""
    if eta <= 0 or c <= 0:
        raise ParameterError("eta and c must be > 0")
    lam = _pencil_eigs(sigma, q)
    return _s0_from_eigs(lam, eta, c, lam.size)


def _s1_from_eigs(lam: np.ndarray, eta: float, c: float, p: int, s0: float) -> float:
    shift = lam / (1.0 + s0) + eta
    a = c / p * float(np.sum((lam / shift) ** 2))
    coeff = 1.0 - a / (1.0 + s0) ** 2
    if coeff <= 0.0:
        raise SingularityError(f"linear coefficient {coeff:.3e} <= 0 in the s1 relation")
    return -a / coeff


def solve_s1(sigma, q, eta: float, c: float, s0: float) -> float:
    """Companion scalar; requires the converged s0."""
    if eta <= 0 or c <= 0:
        raise ParameterError("eta and c must be > 0")
    lam = _pencil_eigs(sigma, q)
    return _s1_from_eigs(lam, eta, c, lam.size, s0)


def deterministic_equivalents(sigma, q, eta: float, c: float) -> AsymptoticState:
    """Solve the fixed points and assemble G and H."""
    if eta <= 0 or c <= 0:
        raise ParameterError("eta and c must be > 0")
    sigma = np.asarray(sigma, dtype=float)
    qm = _as_matrix(q)
    lam = _pencil_eigs(sigma, qm)
    p = lam.size
    s0 = _s0_from_eigs(lam, eta, c, p)
    s1 = _s1_from_eigs(lam, eta, c, p, s0)
    g = SpdSolver(sigma / (1.0 + s0) + eta * qm).solve(np.eye(p))
    g = (g + g.T) / 2.0
    h = g @ sigma @ g
    h = (h + h.T) / 2.0
    return AsymptoticState(s0=s0, s1=s1, g=g, h=h, eta=float(eta), c=float(c))


def limit_sr(kind: str, pop: PopulationModel, q, eta: float, t_obs: int, c: float) -> float:
    """Limiting OOS Sharpe ratio of the ridged solution.

    kind selects which inputs are treated as estimated:
      - "full": sample mean, sample covariance, sample ESG mean;
      - "mixed": sample mean and covariance, ESG mean known;
      - "pop-mean": only the covariance estimated;
      - "unconstrained": sample mean and covariance, no level constraint.
    """
    if kind not in LIMIT_KINDS:
        raise ParameterError(f"kind must be one of {LIMIT_KINDS}")
    state = deterministic_equivalents(pop.returns.sigma, q, eta, c)
    mu = pop.returns.mu
    sigma = pop.returns.sigma
    g, h = state.g, state.h

    mu_g_mu = float(mu @ g @ mu)
    mu_h_mu = float(mu @ h @ mu)
    tr_h_sigma = float(np.einsum("ij,ji->", h, sigma)) / t_obs

    if kind == "unconstrained":
        numerator = mu_g_mu
        radicand = mu_h_mu + tr_h_sigma
    else:
        s_tilde = pop.esg.s_tilde
        omega = pop.esg.omega
        mu_g_s = float(mu @ g @ s_tilde)
        mu_h_s = float(mu @ h @ s_tilde)
        s_g_s = float(s_tilde @ g @ s_tilde)
        s_h_s = float(s_tilde @ h @ s_tilde)
        if kind == "full":
            s_g_s += float(np.einsum("ij,ji->", g, omega)) / t_obs
            s_h_s += float(np.einsum("ij,ji->", h, omega)) / t_obs
        if s_g_s <= 0.0:
            raise DegenerateRiskError("centered score vector degenerate under G")
        numerator = mu_g_mu - mu_g_s**2 / s_g_s
        radicand = mu_h_mu + mu_g_s**2 * s_h_s / s_g_s**2 - 2.0 * mu_g_s * mu_h_s / s_g_s
        if kind != "pop-mean":
            radicand += tr_h_sigma

    if radicand < -1e-12:
        raise NumericalError(f"negative radicand {radicand:.3e} in the limiting SR")
    denom = np.sqrt(state.correction) * np.sqrt(max(radicand, 0.0))
    if denom == 0.0:
        raise NumericalError("degenerate denominator in the limiting SR")
    return numerator / denom


def prop2_limits(pop: PopulationModel, t_obs: int, c: float) -> tuple[float, float]:
    """Limits when Q is a large multiple of Sigma.

    Returns (known-ESG-mean limit, estimated-ESG-mean limit): with
    A = mu' S^-1 mu, B = mu' S^-1 s~, x = s~' S^-1 s~ and
    x' = x + tr[S^-1 Omega] / T, the values are
    (A - B^2/x) / sqrt(A + c - B^2/x) and the same at x'.
    """
    mu = pop.returns.mu
    s_tilde = pop.esg.s_tilde
    solver = SpdSolver(pop.returns.sigma)
    x_mu = solver.solve(mu)
    x_s = solver.solve(s_tilde)
    a = float(mu @ x_mu)
    b = float(mu @ x_s)
    x = float(s_tilde @ x_s)
    if x <= 0.0:
        raise DegenerateRiskError("centered score vector degenerate under Sigma")
    x_prime = x + solver.trace_solve(pop.esg.omega) / t_obs

    def f(xv: float) -> float:
        val = a - b**2 / xv
        return val / np.sqrt(a + c - b**2 / xv)

    return f(x), f(x_prime)
