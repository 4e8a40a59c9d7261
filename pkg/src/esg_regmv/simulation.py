"""Monte Carlo harness: calibration, sampling, and replication studies.

The harness draws Gaussian return/ESG panels from a population model,
re-estimates everything a live desk would estimate, solves each strategy,
and scores the weights against the population moments. Replication r of a
run seeded with ``seed`` always uses the generator
``numpy.random.default_rng([seed, r])`` so any single replication can be
reproduced in isolation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .errors import EsgRegMvError, ParameterError, ReplicationError
from .estimators import (
    EsgMoments,
    MomentModel,
    bai_ng_factors,
    default_k_max,
    esg_moments,
    poet_covariance,
    sample_moments,
)
from .market_data import EsgPanel, PanelBundle, ReturnPanel
from .oracle import MetricRow, PopulationModel, population_metrics
from .regularizers import RegularizerSpec, build_q
from .solvers import PortfolioWeights, solve_constrained, solve_mv
from .sr_estimator import EtaGridEvaluator

__all__ = [
    "SimConfig",
    "ReplicationTable",
    "SrCurve",
    "DEFAULT_STRATEGIES",
    "synthetic_population",
    "calibrate",
    "sample_market",
    "save_population",
    "load_population",
    "subset_population",
    "run_replications",
    "sr_curve",
    "eta_gap_distribution",
]

# Strategy labels: oracle and sample mean-variance with/without the ESG
# level constraint, then the ridged portfolios at estimated/oracle eta.
DEFAULT_STRATEGIES = (
    "Oracle",
    "M-MV-O",
    "Sample",
    "M-MV-S",
    "Q-MV(eta_hat)",
    "Q-MV(eta_star)",
    "Re-MV(eta_hat)",
    "Re-MV(eta_star)",
)

_MAX_DRAW_FACTOR = 50


@dataclass
class SimConfig:
    """Replication-study settings; defaults mirror the reference setup."""

    p: int
    t_obs: int
    reps: int = 200
    gamma: float = 5.0
    s_bar: float = 0.8
    seed: int = 0
    q_spec: RegularizerSpec = None
    eta_mode: str = "grid-select"  # or "fixed"
    eta_fixed: float = None

    def __post_init__(self):
        if self.p < 2 or self.t_obs < 2:
            raise ParameterError("p and t_obs must be >= 2")
        if self.reps < 1:
            raise ParameterError("reps must be >= 1")
        if self.eta_mode not in ("grid-select", "fixed"):
            raise ParameterError("eta_mode must be 'grid-select' or 'fixed'")
        if self.eta_mode == "fixed" and not (self.eta_fixed and self.eta_fixed > 0):
            raise ParameterError("fixed eta_mode needs eta_fixed > 0")


@dataclass
class ReplicationTable:
    """Per-strategy metric means over kept replications."""

    labels: tuple
    rows: dict
    counts: dict
    reps: int
    filtered: int
    failures: dict = field(default_factory=dict)

    def to_frame(self) -> pd.DataFrame:
        data = {
            label: {
                "AM": row.am,
                "SD": row.sd,
                "SR": row.sr,
                "AM_esg": row.am_esg,
                "SD_esg": row.sd_esg,
                "n": self.counts.get(label, 0),
            }
            for label, row in self.rows.items()
        }
        frame = pd.DataFrame.from_dict(data, orient="index")
        return frame.reindex(list(self.labels))


@dataclass(frozen=True)
class SrCurve:
    """Mean estimated and mean realized Sharpe ratios over an eta grid."""

    etas: np.ndarray
    theta_hat_mean: np.ndarray
    theta_star_mean: np.ndarray
    valid_counts: np.ndarray


def synthetic_population(
    p: int,
    seed: int = 0,
    s_bar: float = 0.8,
    n_factors: int = 2,
    alpha_budget: float = 0.08,
    scale: float = 1.0,
) -> PopulationModel:
    """Population model with a spiked factor covariance and score moments
    of realistic monthly magnitude.

    Returns follow a two-factor structure (market-like level factor plus a
    weaker spread factor) with idiosyncratic vols of 2.5-5.5% per month;
    mean returns load on the factors plus idiosyncratic alpha of standard
    deviation alpha_budget / sqrt(p), so the population maximum Sharpe
    ratio stays bounded as p grows (the regime the asymptotic machinery
    assumes). ESG scores live on a 0-1 provider-like scale with
    slow-moving noise.

    ``scale`` multiplies returns (fraction units by default; 100 gives
    percent units, leaving every Sharpe ratio unchanged).
    """
    if p < 2:
        raise ParameterError("p must be >= 2")
    rng = np.random.default_rng(seed)

    loadings = np.empty((p, n_factors))
    loadings[:, 0] = rng.normal(1.0, 0.3, size=p)
    for j in range(1, n_factors):
        loadings[:, j] = rng.normal(0.0, 0.6, size=p)
    factor_vol = np.array([0.045, 0.025] + [0.015] * max(n_factors - 2, 0))[:n_factors]
    idio_vol = rng.uniform(0.025, 0.055, size=p)
    sigma = (loadings * factor_vol**2) @ loadings.T + np.diag(idio_vol**2)

    factor_premia = np.array([0.005, 0.001] + [0.001] * max(n_factors - 2, 0))[:n_factors]
    mu = loadings @ factor_premia + rng.normal(0.0, alpha_budget / np.sqrt(p), size=p)

    s = rng.uniform(0.5, 1.0, size=p)
    esg_loading = rng.normal(0.04, 0.015, size=p)
    esg_idio = rng.uniform(0.03, 0.08, size=p)
    omega = np.outer(esg_loading, esg_loading) + np.diag(esg_idio**2)

    return PopulationModel(
        returns=MomentModel(mu=scale * mu, sigma=scale**2 * (sigma + sigma.T) / 2.0),
        esg=EsgMoments(s=s, omega=(omega + omega.T) / 2.0, s_bar=s_bar),
    )


def calibrate(bundle: PanelBundle, s_bar: float = 0.8) -> PopulationModel:
    """Fit a population model to real panels: sample mean returns, a
    factor-plus-thresholded covariance (factor count auto-selected,
    threshold 1), and sample ESG moments (ridged when p > T)."""
    t, p = bundle.returns.values.shape
    k = bai_ng_factors(bundle.returns, k_max=default_k_max(t, p))
    returns_model = poet_covariance(bundle.returns, k=k, threshold=1.0)
    esg = esg_moments(bundle.esg, s_bar=s_bar, ridge=1e-6)
    return PopulationModel(returns=returns_model, esg=esg)


def _psd_sqrt(m: np.ndarray) -> np.ndarray:
    eigval, eigvec = np.linalg.eigh(m)
    eigval = np.clip(eigval, 0.0, None)
    return (eigvec * np.sqrt(eigval)) @ eigvec.T


class _MarketSampler:
    """Caches matrix square roots so repeated draws cost O(T p^2)."""

    def __init__(self, pop: PopulationModel):
        self.pop = pop
        self.sigma_sqrt = _psd_sqrt(pop.returns.sigma)
        self.omega_sqrt = _psd_sqrt(pop.esg.omega)
        p = pop.n_assets
        self.asset_ids = tuple(f"A{i:04d}" for i in range(p))

    def draw(self, t_obs: int, rng: np.random.Generator) -> PanelBundle:
        p = self.pop.n_assets
        returns = self.pop.returns.mu + rng.standard_normal((t_obs, p)) @ self.sigma_sqrt
        scores = self.pop.esg.s + rng.standard_normal((t_obs, p)) @ self.omega_sqrt
        dates = tuple(f"{t:06d}" for t in range(t_obs))
        return PanelBundle(
            returns=ReturnPanel(returns, self.asset_ids, dates),
            esg=EsgPanel(scores, self.asset_ids, dates),
            risk_free=np.zeros(t_obs),
        )


def sample_market(pop: PopulationModel, t_obs: int, seed) -> PanelBundle:
    """Draw one Gaussian panel bundle (returns and scores independent)."""
    if t_obs < 2:
        raise ParameterError("t_obs must be >= 2")
    return _MarketSampler(pop).draw(t_obs, np.random.default_rng(seed))


def _argmax_estimate(evaluator: EtaGridEvaluator, grid: np.ndarray):
    """Largest-theta_hat grid point (ties to larger eta); None if all invalid."""
    best = None
    for eta in grid:
        try:
            est = evaluator.estimate(float(eta))
        except EsgRegMvError:
            continue
        if best is None or est.theta_hat >= best.theta_hat:
            best = est
    return best


def _argmax_realized(evaluator: EtaGridEvaluator, grid: np.ndarray, model: MomentModel):
    """Grid point with the highest realized Sharpe ratio; None if degenerate."""
    best_eta, best_val = None, -np.inf
    for eta in grid:
        try:
            val = evaluator.realized_sharpe(float(eta), model)
        except EsgRegMvError:
            continue
        if np.isfinite(val) and val >= best_val:
            best_eta, best_val = float(eta), val
    return best_eta


def _ridge_weights(evaluator: EtaGridEvaluator, eta: float, gamma: float) -> PortfolioWeights:
    return PortfolioWeights(w=evaluator.ridge_solution(eta) / gamma, gamma=gamma)


def run_replications(cfg: SimConfig, pop: PopulationModel, strategies=None) -> ReplicationTable:
    """Average population metrics per strategy over kept replications.

    Replications where the unconstrained sample portfolio already meets
    the target score are dropped (the level constraint would not bind);
    dropping is skipped entirely when even the oracle portfolio's score
    meets the target. Draws continue until ``cfg.reps`` replications are
    kept.
    """
    if pop.n_assets != cfg.p:
        raise ParameterError("cfg.p does not match the population model")
    labels = tuple(strategies) if strategies is not None else DEFAULT_STRATEGIES
    unknown = set(labels) - set(DEFAULT_STRATEGIES)
    if unknown:
        raise ParameterError(f"unknown strategies {sorted(unknown)}")
    q_spec = cfg.q_spec if cfg.q_spec is not None else RegularizerSpec("DiagSampleCov")
    grid = (
        q_spec.grid if cfg.eta_mode == "grid-select" else np.array([cfg.eta_fixed], dtype=float)
    )

    sampler = _MarketSampler(pop)
    oracle_w = solve_mv(pop.returns.mu, pop.returns.sigma, cfg.gamma)
    oracle_row = population_metrics(oracle_w, pop)
    mmvo_w, _ = solve_constrained(
        pop.returns.mu, pop.returns.sigma, pop.esg.s_tilde, cfg.gamma
    )
    mmvo_row = population_metrics(mmvo_w, pop)
    filtering_active = oracle_row.am_esg < cfg.s_bar

    sums = {label: np.zeros(5) for label in labels}
    counts = dict.fromkeys(labels, 0)
    failures = dict.fromkeys(labels, 0)

    def accumulate(label: str, row: MetricRow) -> None:
        sums[label] += (row.am, row.sd, row.sr, row.am_esg, row.sd_esg)
        counts[label] += 1

    kept = 0
    filtered = 0
    draw_index = 0
    needs_ridge = any(label.startswith(("Q-MV", "Re-MV")) for label in labels)

    while kept < cfg.reps:
        if draw_index >= _MAX_DRAW_FACTOR * cfg.reps:
            raise ReplicationError(
                f"kept only {kept}/{cfg.reps} replications after {draw_index} draws"
            )
        rng = np.random.default_rng([cfg.seed, draw_index])
        draw_index += 1
        bundle = sampler.draw(cfg.t_obs, rng)
        moments = sample_moments(bundle.returns)
        esg = esg_moments(bundle.esg, cfg.s_bar)

        sample_row = None
        try:
            sample_w = solve_mv(moments.mu, moments.sigma, cfg.gamma)
            sample_row = population_metrics(sample_w, pop)
        except EsgRegMvError:
            pass

        if filtering_active and sample_row is not None and sample_row.am_esg >= cfg.s_bar:
            filtered += 1
            continue
        kept += 1

        constrained = unconstrained = None
        if needs_ridge:
            q = build_q(q_spec, bundle=bundle, population=pop)
            constrained = EtaGridEvaluator(
                moments.mu, moments.sigma, q, cfg.t_obs, esg.s_tilde
            )
            unconstrained = constrained.unconstrained_view()

        for label in labels:
            try:
                if label == "Oracle":
                    row = oracle_row
                elif label == "M-MV-O":
                    row = mmvo_row
                elif label == "Sample":
                    if sample_row is None:
                        raise EsgRegMvError("sample covariance not invertible")
                    row = sample_row
                elif label == "M-MV-S":
                    w, _ = solve_constrained(moments.mu, moments.sigma, esg.s_tilde, cfg.gamma)
                    row = population_metrics(w, pop)
                elif label in ("Q-MV(eta_hat)", "Re-MV(eta_hat)"):
                    ev = unconstrained if label.startswith("Q-MV") else constrained
                    est = _argmax_estimate(ev, grid)
                    if est is None:
                        raise EsgRegMvError("no valid Sharpe estimate on the grid")
                    row = population_metrics(_ridge_weights(ev, est.eta, cfg.gamma), pop)
                elif label in ("Q-MV(eta_star)", "Re-MV(eta_star)"):
                    ev = unconstrained if label.startswith("Q-MV") else constrained
                    eta = _argmax_realized(ev, grid, pop.returns)
                    if eta is None:
                        raise EsgRegMvError("no valid realized Sharpe on the grid")
                    row = population_metrics(_ridge_weights(ev, eta, cfg.gamma), pop)
                else:  # pragma: no cover - guarded above
                    raise ParameterError(label)
            except EsgRegMvError:
                failures[label] += 1
                continue
            accumulate(label, row)

    rows = {}
    for label in labels:
        if counts[label] > 0:
            am, sd, sr, am_esg, sd_esg = sums[label] / counts[label]
            rows[label] = MetricRow(am=am, sd=sd, sr=sr, am_esg=am_esg, sd_esg=sd_esg)
        else:
            rows[label] = MetricRow(*([np.nan] * 5))
    return ReplicationTable(
        labels=labels, rows=rows, counts=counts, reps=kept, filtered=filtered, failures=failures
    )


def sr_curve(pop: PopulationModel, q_spec: RegularizerSpec, cfg: SimConfig) -> SrCurve:
    """Mean estimated and realized Sharpe-ratio curves over the eta grid
    for the constrained ridged portfolio."""
    grid = q_spec.grid
    sampler = _MarketSampler(pop)
    hat_sum = np.zeros(grid.size)
    star_sum = np.zeros(grid.size)
    hat_n = np.zeros(grid.size, dtype=int)

    for rep in range(cfg.reps):
        rng = np.random.default_rng([cfg.seed, rep])
        bundle = sampler.draw(cfg.t_obs, rng)
        moments = sample_moments(bundle.returns)
        esg = esg_moments(bundle.esg, cfg.s_bar)
        q = build_q(q_spec, bundle=bundle, population=pop)
        evaluator = EtaGridEvaluator(moments.mu, moments.sigma, q, cfg.t_obs, esg.s_tilde)
        for i, eta in enumerate(grid):
            star_sum[i] += evaluator.realized_sharpe(float(eta), pop.returns)
            try:
                est = evaluator.estimate(float(eta))
            except EsgRegMvError:
                continue
            hat_sum[i] += est.theta_hat
            hat_n[i] += 1

    with np.errstate(invalid="ignore", divide="ignore"):
        hat_mean = np.where(hat_n > 0, hat_sum / np.maximum(hat_n, 1), np.nan)
    return SrCurve(
        etas=grid.copy(),
        theta_hat_mean=hat_mean,
        theta_star_mean=star_sum / cfg.reps,
        valid_counts=hat_n,
    )


_MODEL_FORMAT = 1


def save_population(path, pop: PopulationModel) -> None:
    """Write a population model to a versioned .npz file."""
    np.savez(
        path,
        format=np.array([_MODEL_FORMAT]),
        mu=pop.returns.mu,
        sigma=pop.returns.sigma,
        s=pop.esg.s,
        omega=pop.esg.omega,
        s_bar=np.array([pop.esg.s_bar]),
    )


def load_population(path) -> PopulationModel:
    """Read a population model written by :func:`save_population`."""
    with np.load(path) as data:
        version = int(data["format"][0])
        if version != _MODEL_FORMAT:
            raise ParameterError(f"unsupported model file format {version}")
        return PopulationModel(
            returns=MomentModel(mu=data["mu"], sigma=data["sigma"]),
            esg=EsgMoments(s=data["s"], omega=data["omega"], s_bar=float(data["s_bar"][0])),
        )


def subset_population(pop: PopulationModel, p: int) -> PopulationModel:
    """Restrict a population model to its first p assets (nested universes
    let one calibration serve several dimension settings)."""
    if p > pop.n_assets:
        raise ParameterError(f"population has only {pop.n_assets} assets")
    if p == pop.n_assets:
        return pop
    idx = slice(0, p)
    return PopulationModel(
        returns=MomentModel(mu=pop.returns.mu[idx], sigma=pop.returns.sigma[idx, idx]),
        esg=EsgMoments(
            s=pop.esg.s[idx], omega=pop.esg.omega[idx, idx], s_bar=pop.esg.s_bar
        ),
    )


def eta_gap_distribution(pop: PopulationModel, q_spec: RegularizerSpec, cfg_list) -> list:
    """Per config, the raw samples of (oracle argmax eta - estimated
    argmax eta) across replications. Configs with p below the population
    dimension run on the nested sub-universe of the first p assets."""
    out = []
    for cfg in cfg_list:
        grid = q_spec.grid
        cfg_pop = subset_population(pop, cfg.p)
        sampler = _MarketSampler(cfg_pop)
        gaps = []
        for rep in range(cfg.reps):
            rng = np.random.default_rng([cfg.seed, rep])
            bundle = sampler.draw(cfg.t_obs, rng)
            moments = sample_moments(bundle.returns)
            esg = esg_moments(bundle.esg, cfg.s_bar)
            q = build_q(q_spec, bundle=bundle, population=cfg_pop)
            evaluator = EtaGridEvaluator(moments.mu, moments.sigma, q, cfg.t_obs, esg.s_tilde)
            est = _argmax_estimate(evaluator, grid)
            eta_star = _argmax_realized(evaluator, grid, cfg_pop.returns)
            if est is None or eta_star is None:
                continue
            gaps.append(eta_star - est.eta)
        out.append(np.asarray(gaps))
    return out
