"""Exception taxonomy shared by every module."""


class SimVPError(Exception):
    """Base class for all errors raised by this package."""


class ConfigurationError(SimVPError):
    """Invalid shapes, hyperparameters, or incompatible settings."""


class UsageError(SimVPError):
    """API or CLI misuse (wrong call order, unknown variant, ...)."""


class FormatError(SimVPError):
    """Malformed on-disk artifact (dataset file, checkpoint, ...)."""


class NumericsError(SimVPError):
    """A forward op produced NaN/Inf from finite inputs, or training diverged."""
