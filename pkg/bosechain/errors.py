"""Exception hierarchy and CLI exit codes."""

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3


class BosechainError(Exception):
    """Base class for all bosechain errors."""


class ConfigurationError(BosechainError, ValueError):
    """Invalid input: wrong sector, out-of-range index, inconsistent config."""


class SectorTooLargeError(ConfigurationError):
    """Sector dimension exceeds the checked integer range or enumeration limit."""


class NumericalError(BosechainError, RuntimeError):
    """Factorization breakdown, non-convergence or failed residual certificate."""


class FailureBudgetExceeded(NumericalError):
    """Too many realizations of an ensemble cell failed."""


class CollapseError(NumericalError):
    """Finite-size scaling fit is degenerate or was rejected."""
