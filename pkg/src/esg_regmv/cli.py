"""Command-line entry point.

    esg-regmv calibrate --config cfg.yaml --out outdir
    esg-regmv simulate  --config cfg.yaml --out outdir [--seed N] [--reps N] [--plots]
    esg-regmv backtest  --config cfg.yaml --out outdir

The config is a YAML file with one section per command (see README for
the schema). Unknown keys are rejected. Exit codes: 0 success,
1 computation failure, 2 config/IO failure. Outputs are deterministic:
identical config and seed produce byte-identical files. Set
ESG_REGMV_THREADS to cap the linear-algebra thread count.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np
import pandas as pd
import yaml

from .backtest import BacktestConfig, rolling_backtest
from .errors import ConfigError, EsgRegMvError
from .market_data import load_panels
from .regularizers import RegularizerSpec
from .simulation import (
    SimConfig,
    calibrate,
    eta_gap_distribution,
    load_population,
    run_replications,
    save_population,
    sr_curve,
    synthetic_population,
)

_DATA_KEYS = {"returns_csv", "esg_csv", "riskfree_csv"}
_CALIBRATE_KEYS = _DATA_KEYS | {"s_bar"}
_SIM_KEYS = {
    "model",
    "synthetic",
    "p",
    "t_obs",
    "reps",
    "gamma",
    "s_bar",
    "seed",
    "eta_mode",
    "eta_fixed",
    "q",
    "strategies",
    "curve",
    "eta_gap",
}
_SYNTH_KEYS = {"p", "seed", "s_bar", "n_factors"}
_Q_KEYS = {"kind", "params", "eta_grid"}
_BT_KEYS = _DATA_KEYS | {
    "window",
    "hold",
    "cost_rate",
    "s_bar",
    "gamma",
    "strategies",
    "candidates",
    "constraint_mode",
    "free_first_trade",
    "standardize_scores",
    "poet_threshold",
}
_GAP_KEYS = {"p", "t_obs", "reps", "seed"}


def _apply_thread_limit() -> None:
    threads = os.environ.get("ESG_REGMV_THREADS")
    if not threads:
        return
    try:
        from threadpoolctl import threadpool_limits

        threadpool_limits(limits=int(threads))
    except (ImportError, ValueError):
        pass  # advisory knob; silently ignored without threadpoolctl


def _check_keys(section: dict, allowed: set, where: str) -> None:
    unknown = sorted(set(section) - allowed)
    if unknown:
        raise ConfigError(f"unknown key(s) {unknown} in {where} section")


def _load_config(path, command: str) -> dict:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a mapping of command sections")
    _check_keys(raw, {"calibrate", "simulate", "backtest"}, "root")
    section = raw.get(command)
    if section is None:
        raise ConfigError(f"config has no '{command}' section")
    return section


def _require_paths(section: dict, where: str) -> tuple:
    for key in ("returns_csv", "esg_csv", "riskfree_csv"):
        if key not in section:
            raise ConfigError(f"{where} section needs {key}")
        if not Path(section[key]).exists():
            raise ConfigError(f"{where}: file not found: {section[key]}")
    return section["returns_csv"], section["esg_csv"], section["riskfree_csv"]


def _q_spec_from(cfg: dict, where: str) -> RegularizerSpec:
    _check_keys(cfg, _Q_KEYS, where)
    if "kind" not in cfg:
        raise ConfigError(f"{where} needs a 'kind'")
    try:
        return RegularizerSpec(
            kind=cfg["kind"],
            params=cfg.get("params", {}),
            eta_grid=cfg.get("eta_grid"),
        )
    except (ValueError, EsgRegMvError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def cmd_calibrate(section: dict, out: Path) -> int:
    _check_keys(section, _CALIBRATE_KEYS, "calibrate")
    paths = _require_paths(section, "calibrate")
    bundle = load_panels(*paths)
    pop = calibrate(bundle, s_bar=float(section.get("s_bar", 0.8)))
    out.mkdir(parents=True, exist_ok=True)
    model_path = out / "model.npz"
    save_population(model_path, pop)

    sig_eig = np.linalg.eigvalsh(pop.returns.sigma)
    om_eig = np.linalg.eigvalsh(pop.esg.omega)
    from .estimators import bai_ng_factors, default_k_max

    t, p = bundle.returns.values.shape
    k = bai_ng_factors(bundle.returns, k_max=default_k_max(t, p))
    print(f"model written to {model_path}")
    print(f"assets: {p}  periods: {t}  factors: {k}")
    print(f"return covariance condition number: {sig_eig[-1] / sig_eig[0]:.6g}")
    print(f"score covariance condition number:  {om_eig[-1] / om_eig[0]:.6g}")
    return 0


def _simulate_population(section: dict):
    if "model" in section and "synthetic" in section:
        raise ConfigError("give either 'model' or 'synthetic', not both")
    if "model" in section:
        path = Path(section["model"])
        if not path.exists():
            raise ConfigError(f"model file not found: {path}")
        return load_population(path)
    if "synthetic" in section:
        synth = dict(section["synthetic"])
        _check_keys(synth, _SYNTH_KEYS, "simulate.synthetic")
        if "p" not in synth:
            raise ConfigError("simulate.synthetic needs 'p'")
        return synthetic_population(**synth)
    raise ConfigError("simulate section needs 'model' or 'synthetic'")


def cmd_simulate(section: dict, out: Path, seed=None, reps=None, plots: bool = False) -> int:
    _check_keys(section, _SIM_KEYS, "simulate")
    pop = _simulate_population(section)
    if seed is None:
        seed = section.get("seed")
    if seed is None:
        raise ConfigError("simulate needs a seed (config key 'seed' or --seed)")
    q_spec = _q_spec_from(dict(section.get("q", {"kind": "DiagSampleCov"})), "simulate.q")

    cfg = SimConfig(
        p=int(section.get("p", pop.n_assets)),
        t_obs=int(section["t_obs"]) if "t_obs" in section else 120,
        reps=int(reps if reps is not None else section.get("reps", 200)),
        gamma=float(section.get("gamma", 5.0)),
        s_bar=float(section.get("s_bar", 0.8)),
        seed=int(seed),
        q_spec=q_spec,
        eta_mode=section.get("eta_mode", "grid-select"),
        eta_fixed=section.get("eta_fixed"),
    )
    out.mkdir(parents=True, exist_ok=True)

    table = run_replications(cfg, pop, strategies=section.get("strategies"))
    table_path = out / "table.csv"
    table.to_frame().to_csv(table_path, index_label="strategy")
    print(f"replication table written to {table_path} "
          f"(kept {table.reps}, filtered {table.filtered})")

    if section.get("curve", False):
        curve = sr_curve(pop, q_spec, cfg)
        curve_path = out / "sr_curve.csv"
        pd.DataFrame(
            {
                "eta": curve.etas,
                "theta_hat_mean": curve.theta_hat_mean,
                "theta_star_mean": curve.theta_star_mean,
                "n_valid": curve.valid_counts,
            }
        ).to_csv(curve_path, index=False)
        print(f"Sharpe curve written to {curve_path}")
        if plots:
            _plot_curve(curve, out / "sr_curve.svg")

    gap_cfgs = section.get("eta_gap")
    if gap_cfgs:
        cfg_list = []
        for i, gap in enumerate(gap_cfgs):
            _check_keys(gap, _GAP_KEYS, f"simulate.eta_gap[{i}]")
            cfg_list.append(
                SimConfig(
                    p=int(gap.get("p", cfg.p)),
                    t_obs=int(gap.get("t_obs", cfg.t_obs)),
                    reps=int(gap.get("reps", cfg.reps)),
                    seed=int(gap.get("seed", cfg.seed)),
                    gamma=cfg.gamma,
                    s_bar=cfg.s_bar,
                    q_spec=q_spec,
                )
            )
        gaps = eta_gap_distribution(pop, q_spec, cfg_list)
        rows = []
        for gap_cfg, samples in zip(cfg_list, gaps):
            for value in samples:
                rows.append({"p": gap_cfg.p, "t_obs": gap_cfg.t_obs, "gap": value})
        gaps_path = out / "eta_gaps.csv"
        pd.DataFrame(rows, columns=["p", "t_obs", "gap"]).to_csv(gaps_path, index=False)
        print(f"eta-gap samples written to {gaps_path}")
        if plots:
            _plot_gaps(cfg_list, gaps, out / "eta_gaps.svg")
    return 0


def _plot_curve(curve, path: Path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(curve.etas, curve.theta_star_mean, label="realized", lw=1.5)
    ax.plot(curve.etas, curve.theta_hat_mean, label="estimated", lw=1.5, ls="--")
    ax.set_xlabel("eta")
    ax.set_ylabel("OOS Sharpe ratio")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    print(f"curve preview written to {path}")


def _plot_gaps(cfg_list, gaps, path: Path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 4))
    ax.boxplot([g for g in gaps], tick_labels=[f"p={c.p}\nT={c.t_obs}" for c in cfg_list])
    ax.set_ylabel("oracle eta minus estimated eta")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    print(f"eta-gap preview written to {path}")


def cmd_backtest(section: dict, out: Path) -> int:
    _check_keys(section, _BT_KEYS, "backtest")
    paths = _require_paths(section, "backtest")
    bundle = load_panels(*paths)

    candidates = None
    if "candidates" in section:
        candidates = tuple(
            _q_spec_from(dict(c), f"backtest.candidates[{i}]")
            for i, c in enumerate(section["candidates"])
        )
    cfg = BacktestConfig(
        window=int(section.get("window", 90)),
        hold=int(section.get("hold", 1)),
        cost_rate=float(section.get("cost_rate", 0.001)),
        s_bar=float(section.get("s_bar", 0.8)),
        gamma=float(section.get("gamma", 5.0)),
        strategies=tuple(section.get("strategies", ("1/N", "Q-MV", "Re-MV"))),
        candidates=candidates,
        constraint_mode=section.get("constraint_mode", "equality"),
        free_first_trade=bool(section.get("free_first_trade", False)),
        standardize_scores=bool(section.get("standardize_scores", False)),
        poet_threshold=float(section.get("poet_threshold", 0.5)),
    )
    report = rolling_backtest(bundle, cfg)
    out.mkdir(parents=True, exist_ok=True)
    report_path = out / "report.csv"
    report.to_frame().to_csv(report_path, index_label="strategy", na_rep="-")

    audit_rows = []
    for label, res in report.results.items():
        if res.failed or res.weights is None:
            continue
        for date, weights in zip(res.node_dates, res.weights):
            for asset, weight in zip(bundle.returns.asset_ids, weights):
                audit_rows.append(
                    {"strategy": label, "date": date, "asset": asset, "weight": weight}
                )
    audit_path = out / "audit.csv"
    pd.DataFrame(audit_rows, columns=["strategy", "date", "asset", "weight"]).to_csv(
        audit_path, index=False
    )
    failed = [label for label, res in report.results.items() if res.failed]
    print(f"report written to {report_path}")
    if failed:
        print(f"strategies marked failed: {', '.join(failed)}")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="esg-regmv",
        description="Regularized ESG-constrained mean-variance portfolio toolkit",
    )
    parser.add_argument("command", choices=["calibrate", "simulate", "backtest"])
    parser.add_argument("--config", required=True, help="YAML config file")
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--seed", type=int, default=None, help="override the simulate seed")
    parser.add_argument("--reps", type=int, default=None, help="override the replication count")
    parser.add_argument(
        "--plots", action="store_true", help="also write SVG previews of curve/gap outputs"
    )
    args = parser.parse_args(argv)
    _apply_thread_limit()

    try:
        section = _load_config(args.config, args.command)
        out = Path(args.out)
        if args.command == "calibrate":
            return cmd_calibrate(section, out)
        if args.command == "simulate":
            return cmd_simulate(section, out, seed=args.seed, reps=args.reps, plots=args.plots)
        return cmd_backtest(section, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 2
    except EsgRegMvError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
