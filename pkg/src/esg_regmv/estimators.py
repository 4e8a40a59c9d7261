"""Moment estimators for return and ESG panels.

All covariance estimates demean the panel and use divisor T, so that the
plug-in pipeline is consistent for every downstream consumer (solvers,
Sharpe estimation, simulation). Shapes: mu (p,), sigma/omega (p, p).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConditioningError, ParameterError
from .market_data import EsgPanel, ReturnPanel

__all__ = [
    "MomentModel",
    "EsgMoments",
    "FactorDecomposition",
    "sample_moments",
    "shrinkage_intensity",
    "linear_shrinkage",
    "bai_ng_factors",
    "poet_decomposition",
    "poet_covariance",
    "esg_moments",
]

_SYM_RTOL = 1e-12
_PSD_RTOL = 1e-10


def _freeze(a: np.ndarray) -> np.ndarray:
    out = np.ascontiguousarray(np.asarray(a, dtype=float))
    out.setflags(write=False)
    return out


def _check_cov(m: np.ndarray, label: str) -> None:
    norm = np.linalg.norm(m)
    if np.linalg.norm(m - m.T) > _SYM_RTOL * max(norm, 1.0):
        raise ConditioningError(f"{label} is not symmetric within tolerance")
    eig = np.linalg.eigvalsh(m)
    if eig[0] < -_PSD_RTOL * max(eig[-1], 0.0) - 1e-300:
        raise ConditioningError(
            f"{label} is not positive semidefinite (min eigenvalue {eig[0]:.3e})"
        )


@dataclass(frozen=True)
class MomentModel:
    """Mean vector and covariance matrix of excess returns."""

    mu: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mu", _freeze(self.mu))
        object.__setattr__(self, "sigma", _freeze(self.sigma))
        if self.mu.ndim != 1 or self.sigma.shape != (self.mu.size, self.mu.size):
            raise ParameterError("mu must be (p,) and sigma (p, p)")
        _check_cov(self.sigma, "covariance")

    @property
    def n_assets(self) -> int:
        return self.mu.size


@dataclass(frozen=True)
class EsgMoments:
    """ESG score mean, covariance, and centered exposure s - s_bar."""

    s: np.ndarray
    omega: np.ndarray
    s_bar: float

    def __post_init__(self):
        object.__setattr__(self, "s", _freeze(self.s))
        object.__setattr__(self, "omega", _freeze(self.omega))
        object.__setattr__(self, "s_bar", float(self.s_bar))
        if self.s.ndim != 1 or self.omega.shape != (self.s.size, self.s.size):
            raise ParameterError("s must be (p,) and omega (p, p)")
        _check_cov(self.omega, "ESG covariance")

    @property
    def s_tilde(self) -> np.ndarray:
        # Recomputed on access so it can never drift from s and s_bar.
        return self.s - self.s_bar

    @property
    def n_assets(self) -> int:
        return self.s.size


@dataclass(frozen=True)
class FactorDecomposition:
    """Low-rank-plus-sparse split of a covariance matrix."""

    k: int
    loadings: np.ndarray     # p x k eigenvectors
    factor_cov: np.ndarray   # k x k, diagonal of leading eigenvalues
    idio: np.ndarray         # p x p thresholded residual covariance

    def __post_init__(self):
        object.__setattr__(self, "loadings", _freeze(self.loadings))
        object.__setattr__(self, "factor_cov", _freeze(self.factor_cov))
        object.__setattr__(self, "idio", _freeze(self.idio))
        if np.any(np.diag(self.idio) <= 0.0):
            raise ConditioningError("idiosyncratic covariance has a non-positive diagonal")

    def reconstruct(self) -> np.ndarray:
        return self.loadings @ self.factor_cov @ self.loadings.T + self.idio


def _demeaned(values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mu = values.mean(axis=0)
    return mu, values - mu


def sample_moments(panel: ReturnPanel) -> MomentModel:
    """Sample mean and demeaned divisor-T sample covariance."""
    mu, x = _demeaned(panel.values)
    t = panel.n_periods
    sigma = x.T @ x / t
    sigma = (sigma + sigma.T) / 2.0
    return MomentModel(mu=mu, sigma=sigma)


def shrinkage_intensity(panel: ReturnPanel) -> float:
    """Analytic intensity for shrinking the sample covariance toward a
    scaled identity, clamped to [0, 1].

    The pilot estimate is the ratio of the average squared fluctuation of
    the per-period outer products around the sample covariance to that
    covariance's squared distance from the identity target.
    """
    _, x = _demeaned(panel.values)
    t, p = x.shape
    s = x.T @ x / t
    nu = np.trace(s) / p
    d2 = np.sum((s - nu * np.eye(p)) ** 2) / p
    if d2 <= 0.0:
        return 0.0
    b2_bar = (np.sum(np.sum(x**2, axis=1) ** 2) / t - np.sum(s**2)) / (p * t)
    b2 = min(max(b2_bar, 0.0), d2)
    return b2 / d2


def linear_shrinkage(panel: ReturnPanel) -> MomentModel:
    """Convex combination of the sample covariance and its scaled-identity
    target; preserves the trace exactly."""
    model = sample_moments(panel)
    p = model.n_assets
    rho = shrinkage_intensity(panel)
    nu = np.trace(model.sigma) / p
    sigma = (1.0 - rho) * model.sigma + rho * nu * np.eye(p)
    return MomentModel(mu=model.mu, sigma=sigma)


def bai_ng_factors(panel: ReturnPanel, k_max: int) -> int:
    """Select the factor count by the IC_p2 information criterion.

    The criterion is ln(V(k)) + k * ((p+T)/(pT)) * ln(min(p, T)) with V(k)
    the average squared residual after projecting out the top k principal
    components of the demeaned panel. The search floor is k = 1.
    """
    t, p = panel.values.shape
    if not 1 <= k_max < min(t, p):
        raise ParameterError(f"k_max must satisfy 1 <= k_max < min(T, p) = {min(t, p)}")
    _, x = _demeaned(panel.values)
    sv2 = np.linalg.svd(x, compute_uv=False) ** 2
    total = sv2.sum()
    penalty = (p + t) / (p * t) * np.log(min(p, t))
    best_k, best_ic = 1, np.inf
    for k in range(1, k_max + 1):
        v_k = max(total - sv2[:k].sum(), 0.0) / (p * t)
        ic = np.log(max(v_k, 1e-300)) + k * penalty
        if ic < best_ic:
            best_k, best_ic = k, ic
    return best_k


def default_k_max(t: int, p: int) -> int:
    """Auto-selection cap: at most 8 factors, and well below the sample
    covariance rank so the residual keeps a positive diagonal."""
    return max(1, min(8, (min(t, p) - 1) // 2))


def _soft_threshold(r: np.ndarray, tau: np.ndarray) -> np.ndarray:
    return np.sign(r) * np.maximum(np.abs(r) - tau, 0.0)


def poet_decomposition(panel: ReturnPanel, k: int, threshold: float) -> FactorDecomposition:
    """Split the sample covariance into top-k eigenpairs plus a
    soft-thresholded residual.

    Residual entry (i, j), i != j, is soft-thresholded at
    threshold * sqrt(R_ii R_jj) * sqrt(log(p) / T); the diagonal is kept.
    """
    t, p = panel.values.shape
    if not 1 <= k < min(t, p):
        raise ParameterError(f"k must satisfy 1 <= k < min(T, p) = {min(t, p)}")
    if threshold < 0:
        raise ParameterError("threshold must be >= 0")
    sigma = sample_moments(panel).sigma
    eigval, eigvec = np.linalg.eigh(sigma)
    order = np.argsort(eigval)[::-1]
    lam = eigval[order[:k]]
    v = eigvec[:, order[:k]]
    residual = sigma - (v * lam) @ v.T
    residual = (residual + residual.T) / 2.0

    diag = np.diag(residual).copy()
    if np.any(diag <= 1e-12 * max(np.max(np.diag(sigma)), 1e-300)):
        raise ConditioningError(
            "residual diagonal non-positive; reduce k or use more observations"
        )
    scale = np.sqrt(np.outer(diag, diag)) * np.sqrt(np.log(p) / t)
    off = _soft_threshold(residual, threshold * scale)
    np.fill_diagonal(off, diag)
    return FactorDecomposition(k=k, loadings=v, factor_cov=np.diag(lam), idio=off)


def poet_covariance(panel: ReturnPanel, k="auto", threshold: float = 0.5) -> MomentModel:
    """Factor part plus thresholded residual; mu is the sample mean.

    ``k="auto"`` selects the factor count with :func:`bai_ng_factors`
    (k_max capped at 8). Raises ConditioningError when the assembled
    matrix is not positive definite — use a larger threshold or add a
    ridge upstream.
    """
    if k == "auto":
        t, p = panel.values.shape
        k = bai_ng_factors(panel, default_k_max(t, p))
    decomp = poet_decomposition(panel, int(k), threshold)
    sigma = decomp.reconstruct()
    sigma = (sigma + sigma.T) / 2.0
    if np.linalg.eigvalsh(sigma)[0] <= 0.0:
        raise ConditioningError(
            "thresholded covariance is not positive definite; "
            "increase the threshold or add a ridge"
        )
    return MomentModel(mu=panel.values.mean(axis=0), sigma=sigma)


def esg_moments(panel: EsgPanel, s_bar: float, ridge: float = 1e-6) -> EsgMoments:
    """Sample ESG mean and covariance; a ridge is added when p > T to keep
    the covariance positive definite."""
    if ridge < 0:
        raise ParameterError("ridge must be >= 0")
    s, x = _demeaned(panel.values)
    t, p = x.shape
    omega = x.T @ x / t
    omega = (omega + omega.T) / 2.0
    if p > t:
        omega = omega + ridge * np.eye(p)
    return EsgMoments(s=s, omega=omega, s_bar=s_bar)
