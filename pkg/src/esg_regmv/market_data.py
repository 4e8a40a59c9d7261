"""Panel ingestion and alignment.

Defines the immutable panel types consumed by every other module and the
CSV loader that aligns returns, ESG scores, and the risk-free series on a
common date index. CSV layout is wide: first column ``date``, one column
per asset id, UTF-8, ``.`` decimal separator, empty cell = missing.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .errors import (
    AlignmentError,
    DegenerateUniverseError,
    PanelFormatError,
    ParameterError,
    ZeroVarianceError,
)

__all__ = [
    "ReturnPanel",
    "EsgPanel",
    "PanelBundle",
    "load_panels",
    "standardize_esg",
]


def _freeze(a: np.ndarray) -> np.ndarray:
    out = np.ascontiguousarray(np.asarray(a, dtype=float))
    out.setflags(write=False)
    return out


def _check_panel(values: np.ndarray, asset_ids: tuple, dates: tuple, label: str) -> None:
    if values.ndim != 2:
        raise PanelFormatError(f"{label}: values must be a T x p matrix")
    t, p = values.shape
    if t < 2 or p < 2:
        raise DegenerateUniverseError(f"{label}: need T >= 2 and p >= 2, got {t} x {p}")
    if len(dates) != t or len(asset_ids) != p:
        raise PanelFormatError(f"{label}: label lengths do not match the value matrix")
    if not np.all(np.isfinite(values)):
        raise PanelFormatError(f"{label}: non-finite or missing entries present")
    if len(set(asset_ids)) != p:
        raise PanelFormatError(f"{label}: asset ids are not unique")
    if any(dates[i] >= dates[i + 1] for i in range(t - 1)):
        raise PanelFormatError(f"{label}: dates must be strictly increasing")


@dataclass(frozen=True)
class ReturnPanel:
    """T x p matrix of monthly excess returns with date/asset labels."""

    values: np.ndarray
    asset_ids: tuple
    dates: tuple

    def __post_init__(self):
        object.__setattr__(self, "values", _freeze(self.values))
        object.__setattr__(self, "asset_ids", tuple(self.asset_ids))
        object.__setattr__(self, "dates", tuple(self.dates))
        _check_panel(self.values, self.asset_ids, self.dates, "return panel")

    @property
    def n_periods(self) -> int:
        return self.values.shape[0]

    @property
    def n_assets(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class EsgPanel:
    """T x p matrix of ESG scores aligned with a ReturnPanel."""

    values: np.ndarray
    asset_ids: tuple
    dates: tuple

    def __post_init__(self):
        object.__setattr__(self, "values", _freeze(self.values))
        object.__setattr__(self, "asset_ids", tuple(self.asset_ids))
        object.__setattr__(self, "dates", tuple(self.dates))
        _check_panel(self.values, self.asset_ids, self.dates, "ESG panel")

    @property
    def n_periods(self) -> int:
        return self.values.shape[0]

    @property
    def n_assets(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class PanelBundle:
    """Aligned return and ESG panels plus the risk-free series.

    Returns are stored as excess returns (raw minus risk-free); all three
    date indexes are identical.
    """

    returns: ReturnPanel
    esg: EsgPanel
    risk_free: np.ndarray = field(default=None)

    def __post_init__(self):
        rf = self.risk_free
        if rf is None:
            rf = np.zeros(self.returns.n_periods)
        object.__setattr__(self, "risk_free", _freeze(rf))
        if self.returns.dates != self.esg.dates:
            raise AlignmentError("return and ESG panels have different date indexes")
        if self.returns.asset_ids != self.esg.asset_ids:
            raise AlignmentError("return and ESG panels have different asset ids")
        if self.risk_free.shape != (self.returns.n_periods,):
            raise AlignmentError("risk-free series length does not match the panels")
        if not np.all(np.isfinite(self.risk_free)):
            raise PanelFormatError("risk-free series has non-finite entries")

    @property
    def n_periods(self) -> int:
        return self.returns.n_periods

    @property
    def n_assets(self) -> int:
        return self.returns.n_assets

    def window(self, start: int, stop: int) -> "PanelBundle":
        """Bundle restricted to date rows [start, stop)."""
        idx = slice(start, stop)
        dates = self.returns.dates[idx]
        return PanelBundle(
            returns=ReturnPanel(self.returns.values[idx], self.returns.asset_ids, dates),
            esg=EsgPanel(self.esg.values[idx], self.esg.asset_ids, dates),
            risk_free=self.risk_free[idx],
        )


def _read_wide_csv(path, label: str) -> pd.DataFrame:
    try:
        df = pd.read_csv(path, dtype={0: str})
    except (OSError, ValueError, pd.errors.ParserError) as exc:
        raise PanelFormatError(f"{label}: cannot parse {path}: {exc}") from exc
    if df.shape[1] < 2:
        raise PanelFormatError(f"{label}: {path} needs a date column plus data columns")
    date_col = df.columns[0]
    df[date_col] = df[date_col].astype(str)
    if df[date_col].duplicated().any():
        raise PanelFormatError(f"{label}: duplicate dates in {path}")
    df = df.set_index(date_col).sort_index()
    for col in df.columns:
        df[col] = pd.to_numeric(df[col], errors="coerce")
    return df


def load_panels(returns_path, esg_path, riskfree_path, policy: str = "drop") -> PanelBundle:
    """Load, align, and clean the three CSV inputs into a PanelBundle.

    Dates are intersected across all three files; assets with any missing
    observation on the common window in either panel are dropped whole
    (``policy="drop"``, the only supported policy). Raw returns are
    converted to excess returns by subtracting the risk-free rate.
    """
    if policy != "drop":
        raise ParameterError(f"unknown missing-data policy {policy!r}; only 'drop' is supported")

    ret = _read_wide_csv(returns_path, "returns")
    esg = _read_wide_csv(esg_path, "esg")
    rf = _read_wide_csv(riskfree_path, "risk-free")
    if rf.shape[1] != 1:
        raise PanelFormatError("risk-free file must have exactly one value column")

    dates = ret.index.intersection(esg.index).intersection(rf.index)
    if len(dates) == 0:
        raise AlignmentError("no common dates across returns, ESG, and risk-free files")
    dates = dates.sort_values()

    # Preserve the ordering of the returns file for assets present in both panels.
    common = [a for a in ret.columns if a in set(esg.columns)]
    if not common:
        raise DegenerateUniverseError("returns and ESG files share no asset ids")

    ret_w = ret.loc[dates, common]
    esg_w = esg.loc[dates, common]
    rf_w = rf.loc[dates].iloc[:, 0]
    if rf_w.isna().any():
        raise PanelFormatError("risk-free series has missing values on the common window")

    keep = [a for a in common if ret_w[a].notna().all() and esg_w[a].notna().all()]
    if len(keep) < 2:
        raise DegenerateUniverseError(
            f"only {len(keep)} asset(s) have complete data on the common window"
        )
    if len(dates) < 2:
        raise AlignmentError("fewer than two common dates")

    excess = ret_w[keep].to_numpy(dtype=float) - rf_w.to_numpy(dtype=float)[:, None]
    date_labels = tuple(dates)
    return PanelBundle(
        returns=ReturnPanel(excess, tuple(keep), date_labels),
        esg=EsgPanel(esg_w[keep].to_numpy(dtype=float), tuple(keep), date_labels),
        risk_free=rf_w.to_numpy(dtype=float),
    )


def standardize_esg(panel: EsgPanel) -> EsgPanel:
    """Z-score each asset's score column over the panel window (divisor T-1)."""
    values = panel.values
    mean = values.mean(axis=0)
    sd = values.std(axis=0, ddof=1)
    bad = np.flatnonzero(sd == 0.0)
    if bad.size:
        raise ZeroVarianceError(
            f"constant ESG column for asset {panel.asset_ids[bad[0]]!r}"
        )
    return EsgPanel((values - mean) / sd, panel.asset_ids, panel.dates)
