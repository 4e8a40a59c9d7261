"""Rolling-window out-of-sample evaluation on real panels.

At each decision node the trailing ``window`` observations are used to
build every strategy's weights (unit budget); weights are held ``hold``
periods while realized excess returns and realized portfolio scores are
recorded, then drift-adjusted weights are rebalanced and proportional
transaction costs applied. A strategy that fails at any node is marked
failed for the whole run — failures are reported, not raised.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .errors import (
    DegenerateStreamError,
    EsgRegMvError,
    ParameterError,
    SolvencyError,
)
from .estimators import esg_moments, linear_shrinkage, poet_covariance, sample_moments
from .market_data import EsgPanel, PanelBundle
from .regularizers import default_adaptive_candidates
from .solvers import (
    PortfolioWeights,
    normalize_to_budget,
    solve_constrained,
    solve_mv,
    solve_regularized,
)
from .sr_estimator import select_regularizer

__all__ = [
    "BacktestConfig",
    "StrategyResult",
    "BacktestReport",
    "DEFAULT_BACKTEST_STRATEGIES",
    "drift_weights",
    "net_return",
    "turnover",
    "oos_metrics",
    "rolling_backtest",
]

DEFAULT_BACKTEST_STRATEGIES = (
    "1/N",
    "Sample",
    "M-MV-S",
    "Q-MV",
    "Re-MV",
    "MV-POET",
    "M-MV-POET",
    "MV-Linear",
    "M-MV-Linear",
    "MV-Nonlinear",
    "M-MV-Nonlinear",
)


@dataclass
class BacktestConfig:
    """Rolling-window settings. cost_rate is per unit of L1 trade
    (0.001 = 10 basis points)."""

    window: int = 90
    hold: int = 1
    cost_rate: float = 0.001
    s_bar: float = 0.8
    gamma: float = 5.0
    strategies: tuple = ("1/N", "Q-MV", "Re-MV")
    candidates: tuple = None  # None -> default adaptive candidate set
    constraint_mode: str = "equality"  # or "inequality"
    free_first_trade: bool = False
    standardize_scores: bool = False
    poet_threshold: float = 0.5
    covariance_plugins: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.window < 2:
            raise ParameterError("window must be >= 2")
        if self.hold < 1:
            raise ParameterError("hold must be >= 1")
        if self.cost_rate < 0:
            raise ParameterError("cost_rate must be >= 0")
        if self.constraint_mode not in ("equality", "inequality"):
            raise ParameterError("constraint_mode must be 'equality' or 'inequality'")
        self.strategies = tuple(self.strategies)


@dataclass
class StrategyResult:
    label: str
    failed: bool = False
    reason: str = None
    sr: float = np.nan
    sr_tc: float = np.nan
    esg_m: float = np.nan
    esg_lq: float = np.nan
    sd_esg: float = np.nan
    to: float = np.nan
    returns: np.ndarray = None
    net_returns: np.ndarray = None
    esg_scores: np.ndarray = None
    node_dates: tuple = ()
    weights: np.ndarray = None


@dataclass
class BacktestReport:
    results: dict
    config: BacktestConfig

    def to_frame(self) -> pd.DataFrame:
        data = {
            label: {
                "SR": res.sr,
                "SR_tc": res.sr_tc,
                "ESG_M": res.esg_m,
                "ESG_LQ": res.esg_lq,
                "SD_esg": res.sd_esg,
                "TO": res.to,
            }
            for label, res in self.results.items()
        }
        return pd.DataFrame.from_dict(data, orient="index").reindex(list(self.results))


def drift_weights(w_prev: np.ndarray, gross_returns: np.ndarray) -> np.ndarray:
    """Buy-and-hold drift: w_i (1 + r_i) / (1 + w' r)."""
    w_prev = np.asarray(w_prev, dtype=float)
    gross_returns = np.asarray(gross_returns, dtype=float)
    growth = 1.0 + float(w_prev @ gross_returns)
    if growth <= 0.0:
        raise SolvencyError(f"portfolio growth factor {growth:.4f} <= 0")
    return w_prev * (1.0 + gross_returns) / growth


def net_return(r_gross: float, w_new: np.ndarray, w_drifted: np.ndarray, cost_rate: float) -> float:
    """Return net of proportional costs on the rebalancing trade."""
    w_new = np.asarray(w_new, dtype=float)
    w_drifted = np.asarray(w_drifted, dtype=float)
    if w_new.shape != w_drifted.shape:
        raise ParameterError("weight vectors must have the same length")
    cost = cost_rate * float(np.abs(w_new - w_drifted).sum())
    if cost == 0.0:
        return float(r_gross)
    return (1.0 - cost) * (1.0 + r_gross) - 1.0


def turnover(targets, drifted) -> float:
    """Average L1 trade per rebalance: mean over l of sum_i |w_{l+1,i} - w+_{l,i}|."""
    targets = [np.asarray(w, dtype=float) for w in targets]
    drifted = [np.asarray(w, dtype=float) for w in drifted]
    if len(targets) != len(drifted):
        raise ParameterError("targets and drifted streams differ in length")
    if not targets:
        raise ParameterError("need at least one rebalance")
    return float(np.mean([np.abs(t - d).sum() for t, d in zip(targets, drifted)]))


def _lower_quartile(values: np.ndarray) -> float:
    """Smallest sample value x with fraction(values <= x) > 1/4."""
    v = np.sort(np.asarray(values, dtype=float))
    m = int(np.floor(0.25 * v.size)) + 1
    return float(v[m - 1])


def oos_metrics(returns: np.ndarray, esg: np.ndarray) -> dict:
    """Sharpe ratio (divisor T-1), mean score, lower-quartile score, and
    score volatility of the out-of-sample streams."""
    returns = np.asarray(returns, dtype=float)
    esg = np.asarray(esg, dtype=float)
    if returns.size < 2 or esg.size < 2:
        raise ParameterError("streams must have length >= 2")
    sd = float(returns.std(ddof=1))
    if sd == 0.0:
        raise DegenerateStreamError("return stream has zero variance")
    return {
        "sr": float(returns.mean()) / sd,
        "esg_m": float(esg.mean()),
        "esg_lq": _lower_quartile(esg),
        "sd_esg": float(esg.std(ddof=1)),
    }


class _WindowContext:
    """Caches the per-window estimates shared across strategies."""

    def __init__(self, bundle: PanelBundle, cfg: BacktestConfig):
        self.bundle = bundle
        self.cfg = cfg
        self._moments = None
        self._esg = None
        self._score_mean = None
        self._score_sd = None
        if cfg.standardize_scores:
            values = bundle.esg.values
            self._score_mean = values.mean(axis=0)
            sd = values.std(axis=0, ddof=1)
            if np.any(sd == 0.0):
                raise DegenerateStreamError("constant in-sample score column")
            self._score_sd = sd

    @property
    def moments(self):
        if self._moments is None:
            self._moments = sample_moments(self.bundle.returns)
        return self._moments

    @property
    def effective_bundle(self) -> PanelBundle:
        """Window bundle with the score standardization applied, if any."""
        if not self.cfg.standardize_scores:
            return self.bundle
        panel = self.bundle.esg
        return PanelBundle(
            returns=self.bundle.returns,
            esg=EsgPanel(
                (panel.values - self._score_mean) / self._score_sd,
                panel.asset_ids,
                panel.dates,
            ),
            risk_free=self.bundle.risk_free,
        )

    @property
    def esg(self):
        if self._esg is None:
            self._esg = esg_moments(self.effective_bundle.esg, self.cfg.s_bar)
        return self._esg

    def transform_scores(self, raw: np.ndarray) -> np.ndarray:
        """Apply the in-sample standardization (if any) to OOS scores."""
        if self._score_mean is None:
            return raw
        return (raw - self._score_mean) / self._score_sd


def _maybe_constrained(ctx: _WindowContext, solve_unconstrained, solve_with_constraint):
    """Equality mode always constrains; inequality mode constrains only
    when the unconstrained weights miss the target score."""
    if ctx.cfg.constraint_mode == "equality":
        return solve_with_constraint()
    w = solve_unconstrained()
    total = float(w.w.sum())
    if total != 0.0 and float(w.w @ ctx.esg.s) / total >= ctx.cfg.s_bar:
        return w
    return solve_with_constraint()


def _strategy_weights(label: str, ctx: _WindowContext) -> PortfolioWeights:
    cfg = ctx.cfg
    if label == "1/N":
        p = ctx.bundle.n_assets
        return PortfolioWeights(w=np.full(p, 1.0 / p), gamma=cfg.gamma)
    if label == "Sample":
        return solve_mv(ctx.moments.mu, ctx.moments.sigma, cfg.gamma)
    if label == "M-MV-S":
        return _maybe_constrained(
            ctx,
            lambda: solve_mv(ctx.moments.mu, ctx.moments.sigma, cfg.gamma),
            lambda: solve_constrained(ctx.moments.mu, ctx.moments.sigma, ctx.esg.s_tilde, cfg.gamma)[0],
        )
    if label in ("Q-MV", "Re-MV"):
        candidates = cfg.candidates if cfg.candidates is not None else default_adaptive_candidates()
        constrained = label == "Re-MV"

        def adaptive(with_constraint: bool) -> PortfolioWeights:
            selection = select_regularizer(
                candidates, ctx.effective_bundle, cfg.s_bar, constrained=with_constraint
            )
            s_tilde = ctx.esg.s_tilde if with_constraint else None
            w, _ = solve_regularized(
                ctx.moments.mu,
                ctx.moments.sigma,
                selection.best.eta,
                selection.best_q,
                s_tilde_hat=s_tilde,
                gamma=cfg.gamma,
            )
            return w

        if not constrained:
            return adaptive(False)
        return _maybe_constrained(ctx, lambda: adaptive(False), lambda: adaptive(True))
    if label in ("MV-POET", "M-MV-POET"):
        model = poet_covariance(ctx.bundle.returns, k="auto", threshold=cfg.poet_threshold)
    elif label in ("MV-Linear", "M-MV-Linear"):
        model = linear_shrinkage(ctx.bundle.returns)
    elif label in ("MV-Nonlinear", "M-MV-Nonlinear"):
        plugin = cfg.covariance_plugins.get("nonlinear")
        if plugin is None:
            raise EsgRegMvError("nonlinear shrinkage plugin not supplied")
        model = plugin(ctx.bundle.returns)
    else:
        raise ParameterError(f"unknown strategy {label!r}")

    if label.startswith("M-MV"):
        return _maybe_constrained(
            ctx,
            lambda: solve_mv(model.mu, model.sigma, cfg.gamma),
            lambda: solve_constrained(model.mu, model.sigma, ctx.esg.s_tilde, cfg.gamma)[0],
        )
    return solve_mv(model.mu, model.sigma, cfg.gamma)


class _StrategyState:
    def __init__(self, label: str, p: int):
        self.label = label
        self.failed = False
        self.reason = None
        self.w_plus = np.zeros(p)  # drifted holdings entering each node
        self.returns = []
        self.net_returns = []
        self.esg_scores = []
        self.trades = []  # L1 trade per rebalance, node >= 1
        self.weights = []
        self.node_dates = []


def rolling_backtest(bundle: PanelBundle, cfg: BacktestConfig) -> BacktestReport:
    """Run every configured strategy through the rolling-window protocol."""
    n = bundle.n_periods
    if n < cfg.window + 1:
        raise ParameterError(f"need at least window+1 = {cfg.window + 1} periods, have {n}")
    for label in cfg.strategies:
        if label not in DEFAULT_BACKTEST_STRATEGIES:
            raise ParameterError(f"unknown strategy {label!r}")

    states = {label: _StrategyState(label, bundle.n_assets) for label in cfg.strategies}
    nodes = list(range(cfg.window, n, cfg.hold))

    for node_index, t in enumerate(nodes):
        window = bundle.window(t - cfg.window, t)
        try:
            ctx = _WindowContext(window, cfg)
        except EsgRegMvError as exc:
            for state in states.values():
                if not state.failed:
                    state.failed, state.reason = True, str(exc)
            break
        for state in states.values():
            if state.failed:
                continue
            try:
                target = normalize_to_budget(_strategy_weights(state.label, ctx)).w
            except EsgRegMvError as exc:
                state.failed, state.reason = True, str(exc)
                continue

            trade = float(np.abs(target - state.w_plus).sum())
            if node_index > 0:
                state.trades.append(trade)
            charge_cost = node_index > 0 or not cfg.free_first_trade
            state.weights.append(target)
            state.node_dates.append(bundle.returns.dates[t])

            held = target
            try:
                for h in range(cfg.hold):
                    if t + h >= n:
                        break
                    excess = bundle.returns.values[t + h]
                    gross = excess + bundle.risk_free[t + h]
                    r_excess = float(held @ excess)
                    total = float(held.sum())
                    scores = ctx.transform_scores(bundle.esg.values[t + h])
                    state.esg_scores.append(float(held @ scores) / total)
                    state.returns.append(r_excess)
                    if h == 0 and charge_cost:
                        state.net_returns.append(
                            (1.0 - cfg.cost_rate * trade) * (1.0 + r_excess) - 1.0
                        )
                    else:
                        state.net_returns.append(r_excess)
                    held = drift_weights(held, gross)
            except EsgRegMvError as exc:
                state.failed, state.reason = True, str(exc)
                continue
            state.w_plus = held

    results = {}
    for label, state in states.items():
        res = StrategyResult(label=label, failed=state.failed, reason=state.reason)
        if state.weights:  # audit data survives even when marked failed
            res.returns = np.asarray(state.returns)
            res.net_returns = np.asarray(state.net_returns)
            res.esg_scores = np.asarray(state.esg_scores)
            res.node_dates = tuple(state.node_dates)
            res.weights = np.asarray(state.weights)
        if not state.failed and len(state.returns) >= 2:
            esg = res.esg_scores
            returns = res.returns
            net = res.net_returns
            sd = float(returns.std(ddof=1))
            net_sd = float(net.std(ddof=1))
            res.sr = float(returns.mean()) / sd if sd > 0 else np.nan
            res.sr_tc = float(net.mean()) / net_sd if net_sd > 0 else np.nan
            res.esg_m = float(esg.mean())
            res.esg_lq = _lower_quartile(esg)
            res.sd_esg = float(esg.std(ddof=1))
            res.to = float(np.mean(state.trades)) if state.trades else 0.0
        elif not state.failed:
            res.failed, res.reason = True, "fewer than two out-of-sample periods"
        results[label] = res
    return BacktestReport(results=results, config=cfg)
