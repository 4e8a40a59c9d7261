"""Exception hierarchy shared by all esg_regmv modules."""


class EsgRegMvError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(EsgRegMvError):
    """Invalid run configuration (unknown keys, missing paths, bad types)."""


class PanelFormatError(EsgRegMvError):
    """Input file could not be parsed into a panel."""


class AlignmentError(EsgRegMvError):
    """Panels share no common date index."""


class DegenerateUniverseError(EsgRegMvError):
    """Fewer than two assets survive loading/cleaning."""


class ZeroVarianceError(EsgRegMvError):
    """A score column is constant and cannot be standardized."""


class ParameterError(EsgRegMvError):
    """Argument outside its documented range."""


class DefinitenessError(EsgRegMvError):
    """A matrix required to be positive definite is not."""


class ConditioningError(EsgRegMvError):
    """An estimator produced a matrix too ill-conditioned to use."""


class FactorizationError(EsgRegMvError):
    """Cholesky factorization failed (matrix singular or indefinite)."""


class DegenerateConstraintError(EsgRegMvError):
    """The centered score vector is (numerically) zero; the level constraint
    is either vacuous or infeasible and the caller must decide which."""


class NormalizationError(EsgRegMvError):
    """Weights sum to (numerically) zero and cannot be scaled to unit budget."""


class DegenerateRiskError(EsgRegMvError):
    """Portfolio variance is non-positive under the supplied moments."""


class NumericalError(EsgRegMvError):
    """An algebraically impossible value appeared (broken inputs)."""


class CorrectionBlowupError(EsgRegMvError):
    """The finite-sample correction term diverged (ridge too small for T)."""


class InvalidEstimateError(EsgRegMvError):
    """The Sharpe-ratio estimate is undefined at this grid point."""


class SelectionError(EsgRegMvError):
    """No grid point / candidate produced a valid estimate."""


class FixedPointError(EsgRegMvError):
    """Fixed-point iteration failed to converge."""


class ReplicationError(EsgRegMvError):
    """The replication harness could not accumulate enough kept draws."""


class SingularityError(EsgRegMvError):
    """A scalar linear relation degenerated (coefficient crossed zero)."""


class SolvencyError(EsgRegMvError):
    """Portfolio value dropped to or below zero during a holding period."""


class DegenerateStreamError(EsgRegMvError):
    """An out-of-sample return stream has zero variance."""
