"""Registry of regularization matrices.

A RegularizerSpec declares which matrix to build (identity, covariance
estimators, ESG-based diagonals, population benchmarks, or a custom
builder) together with its ridge-strength grid; build_q materializes it
and proves positive definiteness by Cholesky factorization.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Mapping

import numpy as np

from .errors import DefinitenessError, ParameterError
from .estimators import esg_moments, linear_shrinkage, poet_covariance, sample_moments
from .market_data import PanelBundle

__all__ = [
    "RegularizerKind",
    "RegularizerSpec",
    "RegularizerMatrix",
    "default_grid",
    "build_q",
    "default_adaptive_candidates",
]


class RegularizerKind(str, Enum):
    IDENTITY = "Identity"
    DIAG_SAMPLE_COV = "DiagSampleCov"
    LINEAR_SHRINK_COV = "LinearShrinkCov"
    POET_COV = "PoetCov"
    ESG_SAMPLE_COV = "EsgSampleCov"
    ESG_MEAN_DIAG = "EsgMeanDiag"
    ESG_MEAN_INV_DIAG = "EsgMeanInvDiag"
    POPULATION_SIGMA = "PopulationSigma"
    POPULATION_OMEGA = "PopulationOmega"
    CUSTOM = "Custom"


# Grid families: the identity ridge works at the scale of return variances,
# the ESG mean diagonals at score scale, everything else at unit scale.
_IDENTITY_GRID = 0.0002 * np.arange(1, 51)
_ESG_DIAG_GRID = 0.02 * np.arange(1, 51)
_DEFAULT_GRID = 0.2 * np.arange(1, 51)


def default_grid(kind) -> np.ndarray:
    """Default 50-point eta grid for a regularizer kind."""
    kind = RegularizerKind(kind)
    if kind is RegularizerKind.IDENTITY:
        return _IDENTITY_GRID.copy()
    if kind in (RegularizerKind.ESG_MEAN_DIAG, RegularizerKind.ESG_MEAN_INV_DIAG):
        return _ESG_DIAG_GRID.copy()
    return _DEFAULT_GRID.copy()


@dataclass(frozen=True)
class RegularizerSpec:
    """Declarative description of a regularization matrix and its eta grid."""

    kind: RegularizerKind
    params: Mapping = field(default_factory=dict)
    eta_grid: tuple = None  # None -> default_grid(kind)

    def __post_init__(self):
        object.__setattr__(self, "kind", RegularizerKind(self.kind))
        object.__setattr__(self, "params", dict(self.params))
        grid = self.eta_grid
        if grid is None:
            grid = tuple(default_grid(self.kind))
        else:
            grid = tuple(float(g) for g in grid)
        if not grid:
            raise ParameterError("eta_grid must be nonempty")
        if any(g <= 0 for g in grid):
            raise ParameterError("eta_grid values must be strictly positive")
        if any(a >= b for a, b in zip(grid, grid[1:])):
            raise ParameterError("eta_grid must be strictly increasing")
        object.__setattr__(self, "eta_grid", grid)

    @property
    def grid(self) -> np.ndarray:
        return np.asarray(self.eta_grid)


@dataclass(frozen=True)
class RegularizerMatrix:
    """A positive definite p x p matrix plus the spec that produced it."""

    q: np.ndarray
    provenance: RegularizerSpec

    def __post_init__(self):
        q = np.ascontiguousarray(np.asarray(self.q, dtype=float))
        q.setflags(write=False)
        object.__setattr__(self, "q", q)
        norm = np.linalg.norm(q)
        if np.linalg.norm(q - q.T) > 1e-12 * max(norm, 1.0):
            raise DefinitenessError("regularization matrix is not symmetric")
        try:
            np.linalg.cholesky(q)
        except np.linalg.LinAlgError as exc:
            raise DefinitenessError(
                f"regularization matrix ({self.provenance.kind.value}) is not positive definite"
            ) from exc

    @property
    def n_assets(self) -> int:
        return self.q.shape[0]


def _positive_diag(diag: np.ndarray, asset_ids, what: str) -> None:
    bad = np.flatnonzero(diag <= 0.0)
    if bad.size:
        name = asset_ids[bad[0]] if asset_ids is not None else f"index {bad[0]}"
        raise DefinitenessError(f"{what} non-positive for asset {name!r}")


def build_q(spec: RegularizerSpec, bundle: PanelBundle = None, population=None) -> RegularizerMatrix:
    """Materialize the regularization matrix described by ``spec``.

    ``bundle`` supplies the in-sample panels for data-driven kinds;
    ``population`` (an object with .returns.sigma and .esg.omega) is
    required for the population benchmark kinds.
    """
    kind = spec.kind
    if kind in (RegularizerKind.POPULATION_SIGMA, RegularizerKind.POPULATION_OMEGA):
        if population is None:
            raise ParameterError(f"{kind.value} requires a population model")
        q = population.returns.sigma if kind is RegularizerKind.POPULATION_SIGMA else population.esg.omega
        return RegularizerMatrix(q=np.array(q, dtype=float), provenance=spec)

    if kind is RegularizerKind.CUSTOM:
        builder: Callable = spec.params.get("builder")
        if builder is None:
            raise ParameterError("Custom regularizer needs a 'builder' callable in params")
        return RegularizerMatrix(q=np.asarray(builder(bundle, population), dtype=float), provenance=spec)

    if bundle is None:
        if kind is RegularizerKind.IDENTITY:
            p = spec.params.get("p")
            if p is None:
                raise ParameterError("Identity without a bundle needs params['p']")
            return RegularizerMatrix(q=np.eye(int(p)), provenance=spec)
        raise ParameterError(f"{kind.value} requires a panel bundle")

    p = bundle.n_assets
    ids = bundle.returns.asset_ids

    if kind is RegularizerKind.IDENTITY:
        q = np.eye(p)
    elif kind is RegularizerKind.DIAG_SAMPLE_COV:
        diag = np.diag(sample_moments(bundle.returns).sigma).copy()
        _positive_diag(diag, ids, "sample variance")
        q = np.diag(diag)
    elif kind is RegularizerKind.LINEAR_SHRINK_COV:
        q = linear_shrinkage(bundle.returns).sigma
    elif kind is RegularizerKind.POET_COV:
        q = poet_covariance(
            bundle.returns,
            k=spec.params.get("k", "auto"),
            threshold=float(spec.params.get("threshold", 0.5)),
        ).sigma
    elif kind is RegularizerKind.ESG_SAMPLE_COV:
        q = esg_moments(bundle.esg, s_bar=0.0, ridge=float(spec.params.get("ridge", 1e-6))).omega
    elif kind is RegularizerKind.ESG_MEAN_DIAG:
        s = bundle.esg.values.mean(axis=0)
        _positive_diag(s, ids, "mean ESG score")
        q = np.diag(s)
    elif kind is RegularizerKind.ESG_MEAN_INV_DIAG:
        s = bundle.esg.values.mean(axis=0)
        _positive_diag(s, ids, "mean ESG score")
        q = np.diag(1.0 / s)
    else:  # pragma: no cover - enum is exhaustive
        raise ParameterError(f"unhandled regularizer kind {kind!r}")

    return RegularizerMatrix(q=q, provenance=spec)


def default_adaptive_candidates() -> list[RegularizerSpec]:
    """Candidate set used by adaptive selection: diagonal sample covariance,
    linear shrinkage, and identity."""
    return [
        RegularizerSpec(RegularizerKind.DIAG_SAMPLE_COV),
        RegularizerSpec(RegularizerKind.LINEAR_SHRINK_COV),
        RegularizerSpec(RegularizerKind.IDENTITY),
    ]
