"""Regularized ESG-constrained mean-variance portfolios in large dimensions.

Library layout:
  market_data   panel types and CSV ingestion
  estimators    sample / shrinkage / factor-threshold moment estimators
  regularizers  registry of ridge-direction matrices Q and their eta grids
  solvers       closed-form portfolio solutions
  oracle        population-moment scoring of weight vectors
  sr_estimator  bias-corrected OOS Sharpe estimation and adaptive selection
  asymptotics   deterministic equivalents and limiting Sharpe ratios
  simulation    calibration, Gaussian sampling, replication studies
  backtest      rolling-window evaluation with transaction costs
  cli           esg-regmv command-line entry point
"""

from .backtest import (
    BacktestConfig,
    BacktestReport,
    drift_weights,
    net_return,
    oos_metrics,
    rolling_backtest,
    turnover,
)
from .errors import EsgRegMvError
from .estimators import (
    EsgMoments,
    FactorDecomposition,
    MomentModel,
    bai_ng_factors,
    esg_moments,
    linear_shrinkage,
    poet_covariance,
    sample_moments,
)
from .market_data import EsgPanel, PanelBundle, ReturnPanel, load_panels, standardize_esg
from .oracle import MetricRow, PopulationModel, oos_sharpe, population_metrics, theta_max
from .regularizers import (
    RegularizerKind,
    RegularizerMatrix,
    RegularizerSpec,
    build_q,
    default_adaptive_candidates,
    default_grid,
)
from .asymptotics import (
    AsymptoticState,
    deterministic_equivalents,
    limit_sr,
    prop2_limits,
    solve_s0,
    solve_s1,
)
from .simulation import (
    SimConfig,
    calibrate,
    eta_gap_distribution,
    run_replications,
    sample_market,
    sr_curve,
    synthetic_population,
)
from .solvers import (
    LagrangeInfo,
    PortfolioWeights,
    anorm_budget,
    normalize_to_budget,
    solve_constrained,
    solve_mv,
    solve_regularized,
)
from .sr_estimator import (
    EtaGridEvaluator,
    SelectionResult,
    SharpeEstimate,
    estimate_d1,
    estimate_d2,
    estimate_sharpe,
    select_eta,
    select_regularizer,
)

__version__ = "0.1.0"
