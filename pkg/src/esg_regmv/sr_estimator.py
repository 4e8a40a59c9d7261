"""Feasible out-of-sample Sharpe ratio estimation and ridge selection.

The estimator corrects the naive in-sample quadratic forms for
high-dimensional estimation error: the numerator subtracts a trace term
tr((S + eta*Q)^{-1} S) / (T - tr(.)), and the denominator deflates by
(1 - tr(S (S + eta*Q)^{-1}) / T)^2, where S is the sample covariance.

Grid sweeps share one generalized eigendecomposition of the pencil
(S, Q): with V' Q V = I and V' S V = diag(lam), every quantity needed at
a grid point reduces to O(p) work on the spectrum lam / (lam + eta).
Single-point entry points use an independent Cholesky path instead, so
the two routes cross-check each other.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import (
    CorrectionBlowupError,
    DegenerateConstraintError,
    EsgRegMvError,
    InvalidEstimateError,
    ParameterError,
    SelectionError,
)
from .estimators import MomentModel, esg_moments, sample_moments
from .market_data import PanelBundle
from .regularizers import RegularizerKind, RegularizerMatrix, RegularizerSpec, build_q
from .solvers import SpdSolver

__all__ = [
    "SharpeEstimate",
    "CandidateOutcome",
    "SelectionResult",
    "EtaGridEvaluator",
    "estimate_d1",
    "estimate_d2",
    "estimate_sharpe",
    "select_eta",
    "select_regularizer",
]

_D2_DENOM_FLOOR = 1e-6


@dataclass(frozen=True)
class SharpeEstimate:
    """Bias-corrected Sharpe components at one (eta, Q) point."""

    d1_hat: float
    d2_hat: float
    theta_hat: float
    eta: float
    q_kind: RegularizerKind = None


@dataclass(frozen=True)
class CandidateOutcome:
    q_kind: RegularizerKind
    eta_star: float
    theta_hat: float
    error: str = None


@dataclass(frozen=True)
class SelectionResult:
    """Winner of the adaptive sweep plus per-candidate diagnostics."""

    best: SharpeEstimate
    per_candidate: tuple
    best_q: RegularizerMatrix = None


def _as_matrix(q) -> np.ndarray:
    return q.q if isinstance(q, RegularizerMatrix) else np.asarray(q, dtype=float)


def _q_kind(q) -> RegularizerKind:
    return q.provenance.kind if isinstance(q, RegularizerMatrix) else None


class EtaGridEvaluator:
    """Evaluates estimator and oracle quantities across an eta grid.

    Factorizes the pencil (sample covariance, Q) once; each grid point then
    costs O(p) for the estimator and O(p^2) when population moments are
    supplied for the realized Sharpe ratio.
    """

    def __init__(
        self,
        mu_hat: np.ndarray,
        sigma_hat: np.ndarray,
        q,
        t_obs: int,
        s_tilde_hat: np.ndarray = None,
    ):
        mu_hat = np.asarray(mu_hat, dtype=float)
        sigma_hat = np.asarray(sigma_hat, dtype=float)
        qm = _as_matrix(q)
        if t_obs < 2:
            raise ParameterError("need T >= 2")
        p = mu_hat.size
        if sigma_hat.shape != (p, p) or qm.shape != (p, p):
            raise ParameterError("dimension mismatch among mu, sigma, and Q")
        # Pencil eigenvectors: V' Q V = I, V' S V = diag(lam), lam >= 0.
        lam, v = scipy.linalg.eigh((sigma_hat + sigma_hat.T) / 2.0, qm)
        self.lam = np.maximum(lam, 0.0)
        self.v = v
        self.t_obs = int(t_obs)
        self.p = p
        self.q_kind = _q_kind(q)
        self.m = v.T @ mu_hat
        self.s = v.T @ s_tilde_hat if s_tilde_hat is not None else None
        self._legacy_trace = float(np.sum(self.lam / (self.lam + 1.0)))

    def unconstrained_view(self) -> "EtaGridEvaluator":
        """Same factorization with the level constraint dropped."""
        view = object.__new__(EtaGridEvaluator)
        view.__dict__.update(self.__dict__)
        view.s = None
        return view

    def _zeta(self, inv_shift: np.ndarray) -> float:
        if self.s is None:
            return 0.0
        den = float(np.sum(self.s**2 * inv_shift))
        if den <= 1e-12 * max(float(np.sum(self.s**2)), 1e-300):
            raise DegenerateConstraintError("centered score vector degenerate on the grid")
        num = float(np.sum(self.s * self.m * inv_shift))
        return -num / den

    def components(self, eta: float, d2_denominator_eta: bool = True) -> tuple[float, float]:
        """(d1_hat, d2_hat) at one grid point; raises on blowup."""
        if eta <= 0:
            raise ParameterError("eta must be > 0")
        inv_shift = 1.0 / (self.lam + eta)
        zeta = self._zeta(inv_shift)
        quad_mu = float(np.sum(self.m**2 * inv_shift))
        cross = float(np.sum(self.s * self.m * inv_shift)) if self.s is not None else 0.0
        trace = float(np.sum(self.lam * inv_shift))
        if self.t_obs <= trace:
            raise CorrectionBlowupError(
                f"T = {self.t_obs} <= tr correction {trace:.3f}; eta too small"
            )
        d1 = quad_mu + zeta * cross - trace / (self.t_obs - trace)

        b = self.m + zeta * self.s if self.s is not None else self.m
        numerator = float(np.sum(b**2 * self.lam * inv_shift**2))
        trace_d2 = trace if d2_denominator_eta else self._legacy_trace
        denom = (1.0 - trace_d2 / self.t_obs) ** 2
        if denom < _D2_DENOM_FLOOR:
            raise CorrectionBlowupError(f"denominator {denom:.3e} collapsed")
        return d1, numerator / denom

    def estimate(self, eta: float, d2_denominator_eta: bool = True) -> SharpeEstimate:
        d1, d2 = self.components(eta, d2_denominator_eta)
        if d2 <= 0.0:
            raise InvalidEstimateError(f"d2_hat = {d2:.3e} <= 0 at eta = {eta}")
        return SharpeEstimate(
            d1_hat=d1, d2_hat=d2, theta_hat=d1 / np.sqrt(d2), eta=float(eta), q_kind=self.q_kind
        )

    def ridge_solution(self, eta: float) -> np.ndarray:
        """Direction (S + eta*Q)^{-1} (mu_hat + zeta * s_tilde_hat); multiply
        by 1/gamma for actual weights."""
        inv_shift = 1.0 / (self.lam + eta)
        zeta = self._zeta(inv_shift)
        b = self.m + zeta * self.s if self.s is not None else self.m
        return self.v @ (b * inv_shift)

    def realized_sharpe(self, eta: float, model: MomentModel) -> float:
        """Population OOS Sharpe ratio of the ridge solution at eta."""
        direction = self.ridge_solution(eta)
        num = float(direction @ model.mu)
        var = float(direction @ model.sigma @ direction)
        return num / np.sqrt(abs(var))


def _components_cholesky(mu_hat, sigma_hat, s_tilde_hat, eta, q, t_obs, d2_denominator_eta):
    """Single-point (d1, d2) via Cholesky solves, independent of the pencil path."""
    if eta <= 0:
        raise ParameterError("eta must be > 0")
    mu_hat = np.asarray(mu_hat, dtype=float)
    sigma_hat = np.asarray(sigma_hat, dtype=float)
    qm = _as_matrix(q)
    solver = SpdSolver(sigma_hat + eta * qm)
    x_mu = solver.solve(mu_hat)
    if s_tilde_hat is not None:
        s_tilde_hat = np.asarray(s_tilde_hat, dtype=float)
        x_s = solver.solve(s_tilde_hat)
        den = float(s_tilde_hat @ x_s)
        if den <= 1e-12 * max(float(s_tilde_hat @ s_tilde_hat), 1e-300):
            raise DegenerateConstraintError("centered score vector degenerate")
        cross = float(s_tilde_hat @ x_mu)
        zeta = -cross / den
        x_b = x_mu + zeta * x_s
    else:
        zeta, cross = 0.0, 0.0
        x_b = x_mu
    trace = solver.trace_solve(sigma_hat)
    if t_obs <= trace:
        raise CorrectionBlowupError(f"T = {t_obs} <= tr correction {trace:.3f}; eta too small")
    d1 = float(mu_hat @ x_mu) + zeta * cross - trace / (t_obs - trace)

    numerator = float(x_b @ sigma_hat @ x_b)
    if d2_denominator_eta:
        trace_d2 = trace
    else:
        trace_d2 = SpdSolver(sigma_hat + qm).trace_solve(sigma_hat)
    denom = (1.0 - trace_d2 / t_obs) ** 2
    if denom < _D2_DENOM_FLOOR:
        raise CorrectionBlowupError(f"denominator {denom:.3e} collapsed")
    return d1, numerator / denom


def estimate_d1(mu_hat, sigma_hat, s_tilde_hat, eta, q, t_obs) -> float:
    """Bias-corrected numerator component at one (eta, Q) point."""
    d1, _ = _components_cholesky(mu_hat, sigma_hat, s_tilde_hat, eta, q, t_obs, True)
    return d1


def estimate_d2(
    mu_hat, sigma_hat, s_tilde_hat, eta, q, t_obs, p=None, d2_denominator_eta: bool = True
) -> float:
    """Deflated denominator component at one (eta, Q) point.

    ``d2_denominator_eta=False`` switches the deflation trace to the
    unscaled pencil (S + Q)^{-1}; the default keeps eta in the trace for
    consistency with the numerator correction.
    """
    if p is not None and np.asarray(mu_hat).size != p:
        raise ParameterError("p does not match mu_hat")
    _, d2 = _components_cholesky(
        mu_hat, sigma_hat, s_tilde_hat, eta, q, t_obs, d2_denominator_eta
    )
    return d2


def estimate_sharpe(
    mu_hat, sigma_hat, s_tilde_hat, eta, q, t_obs, d2_denominator_eta: bool = True
) -> SharpeEstimate:
    """Point estimate theta_hat = d1_hat / sqrt(d2_hat)."""
    d1, d2 = _components_cholesky(
        mu_hat, sigma_hat, s_tilde_hat, eta, q, t_obs, d2_denominator_eta
    )
    if d2 <= 0.0:
        raise InvalidEstimateError(f"d2_hat = {d2:.3e} <= 0 at eta = {eta}")
    return SharpeEstimate(
        d1_hat=d1, d2_hat=d2, theta_hat=d1 / np.sqrt(d2), eta=float(eta), q_kind=_q_kind(q)
    )


def select_eta(
    mu_hat,
    sigma_hat,
    s_tilde_hat,
    q,
    grid,
    t_obs,
    d2_denominator_eta: bool = True,
) -> tuple[float, SharpeEstimate]:
    """Argmax of theta_hat over the grid; invalid points are skipped and
    ties break toward the larger eta."""
    grid = np.atleast_1d(np.asarray(grid, dtype=float))
    if grid.size == 0:
        raise SelectionError("empty eta grid")
    evaluator = EtaGridEvaluator(mu_hat, sigma_hat, q, t_obs, s_tilde_hat)
    best = None
    for eta in np.sort(grid):
        try:
            est = evaluator.estimate(float(eta), d2_denominator_eta)
        except (CorrectionBlowupError, InvalidEstimateError, DegenerateConstraintError):
            continue
        if best is None or est.theta_hat >= best.theta_hat:
            best = est
    if best is None:
        raise SelectionError("no grid point produced a valid Sharpe estimate")
    return best.eta, best


def select_regularizer(
    candidates,
    bundle: PanelBundle,
    s_bar: float,
    population=None,
    constrained: bool = True,
    d2_denominator_eta: bool = True,
) -> SelectionResult:
    """Run the eta sweep for every candidate spec and return the global
    argmax of the estimated Sharpe ratio.

    Moments are estimated from ``bundle``; candidates whose sweep fails
    entirely are recorded with the failure reason and excluded.
    """
    candidates = list(candidates)
    if not candidates:
        raise SelectionError("empty candidate set")
    moments = sample_moments(bundle.returns)
    s_tilde = None
    if constrained:
        s_tilde = esg_moments(bundle.esg, s_bar).s_tilde
    t_obs = bundle.n_periods

    outcomes = []
    best, best_q = None, None
    for spec in candidates:
        spec = spec if isinstance(spec, RegularizerSpec) else RegularizerSpec(spec)
        try:
            q = build_q(spec, bundle=bundle, population=population)
            eta_star, est = select_eta(
                moments.mu, moments.sigma, s_tilde, q, spec.grid, t_obs, d2_denominator_eta
            )
        except (EsgRegMvError, np.linalg.LinAlgError) as exc:
            outcomes.append(
                CandidateOutcome(q_kind=spec.kind, eta_star=np.nan, theta_hat=np.nan, error=str(exc))
            )
            continue
        outcomes.append(CandidateOutcome(q_kind=spec.kind, eta_star=eta_star, theta_hat=est.theta_hat))
        if best is None or est.theta_hat > best.theta_hat:
            best, best_q = est, q
    if best is None:
        raise SelectionError("every candidate regularizer failed")
    return SelectionResult(best=best, per_candidate=tuple(outcomes), best_q=best_q)
