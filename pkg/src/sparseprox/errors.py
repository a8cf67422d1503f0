"""Exception types raised across the package."""


class SparseProxError(Exception):
    """Base class for all package errors."""


class ConfigError(SparseProxError, ValueError):
    """Invalid configuration value or unknown configuration key."""


class DataFormatError(SparseProxError, ValueError):
    """A dataset file is malformed (bad magic, truncation, ragged rows...)."""


class ShapeError(SparseProxError, ValueError):
    """Array shapes do not compose; the message names the offending layer."""


class ProxDomainError(SparseProxError, ArithmeticError):
    """The closed-form prox was asked for a point outside its validity."""


class TrainingDivergence(SparseProxError, ArithmeticError):
    """The training loss became non-finite."""
