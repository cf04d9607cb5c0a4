"""Exception types raised across the package."""


class RankLabError(Exception):
    """Base class for every error this package raises on purpose."""


class ConfigError(RankLabError, ValueError):
    """Shapes or configuration values do not fit together."""


class InputError(RankLabError, ValueError):
    """An input matrix or vector is malformed (wrong rank, non-finite entries)."""


class SizeCapError(RankLabError, ValueError):
    """A dense operator would exceed the configured size cap."""


class DataError(RankLabError, ValueError):
    """A dataset record or categorical index is invalid."""


class NumericOverflowError(RankLabError, ArithmeticError):
    """A non-finite value appeared during a forward pass or training step."""

    def __init__(self, stage, message=None):
        self.stage = stage
        super().__init__(message or f"non-finite values at stage {stage!r}")


class ProbeError(RankLabError, ArithmeticError):
    """A finite-difference probe produced a non-finite function value."""


class UndefinedMetricError(RankLabError, ValueError):
    """A metric is undefined for the given labels (e.g. AUC on one class)."""
