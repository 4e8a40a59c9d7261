"""Population-moment evaluation of portfolio weights.

Given true (or calibrated) moments, score any weight vector: realized
Sharpe ratio, the constrained maximum attainable Sharpe ratio, and the
simulation metric suite (mean, volatility, SR, and their ESG analogues
on unit-budget weights).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateRiskError, NumericalError, ParameterError
from .estimators import EsgMoments, MomentModel
from .solvers import PortfolioWeights, SpdSolver, normalize_to_budget

__all__ = ["PopulationModel", "MetricRow", "oos_sharpe", "theta_max", "population_metrics"]


@dataclass(frozen=True)
class PopulationModel:
    """True return moments paired with true ESG moments."""

    returns: MomentModel
    esg: EsgMoments

    def __post_init__(self):
        if self.returns.n_assets != self.esg.n_assets:
            raise ParameterError("return and ESG moments disagree on p")

    @property
    def n_assets(self) -> int:
        return self.returns.n_assets


@dataclass(frozen=True)
class MetricRow:
    am: float
    sd: float
    sr: float
    am_esg: float
    sd_esg: float


def oos_sharpe(weights: PortfolioWeights, model: MomentModel) -> float:
    """w' mu / sqrt(w' Sigma w); invariant under positive rescaling of w."""
    w = weights.w
    if w.size != model.n_assets:
        raise ParameterError("dimension mismatch between weights and moments")
    variance = float(w @ model.sigma @ w)
    if variance <= 0.0:
        raise DegenerateRiskError("portfolio variance is non-positive under these moments")
    return float(w @ model.mu) / np.sqrt(variance)


def theta_max(pop: PopulationModel) -> float:
    """Maximum Sharpe ratio attainable under the level constraint with
    known moments: sqrt(mu' S^-1 mu - (mu' S^-1 s~)^2 / (s~' S^-1 s~))."""
    mu = pop.returns.mu
    s_tilde = pop.esg.s_tilde
    solver = SpdSolver(pop.returns.sigma)
    x_mu = solver.solve(mu)
    x_s = solver.solve(s_tilde)
    quad_s = float(s_tilde @ x_s)
    if quad_s <= 0.0:
        raise DegenerateRiskError("centered score vector is degenerate under Sigma")
    radicand = float(mu @ x_mu) - float(mu @ x_s) ** 2 / quad_s
    if radicand < -1e-12:
        raise NumericalError(f"negative radicand {radicand:.3e}; inputs are inconsistent")
    return np.sqrt(max(radicand, 0.0))


def population_metrics(weights: PortfolioWeights, pop: PopulationModel) -> MetricRow:
    """Metric suite on unit-budget weights: mean, volatility, Sharpe ratio,
    mean ESG score, and ESG volatility under the population moments."""
    w = normalize_to_budget(weights).w
    am = float(w @ pop.returns.mu)
    sd = float(np.sqrt(max(w @ pop.returns.sigma @ w, 0.0)))
    am_esg = float(w @ pop.esg.s)
    sd_esg = float(np.sqrt(max(w @ pop.esg.omega @ w, 0.0)))
    sr = am / sd if sd > 0 else np.nan
    return MetricRow(am=am, sd=sd, sr=sr, am_esg=am_esg, sd_esg=sd_esg)
