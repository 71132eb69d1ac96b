"""Exception types shared across the package."""


class HetRegionError(Exception):
    """Base class for all package errors."""


class DataError(HetRegionError, ValueError):
    """Input data violates a contract (bad CSV cell, non-binary decision, ...)."""


class ConfigError(HetRegionError, ValueError):
    """A configuration value is invalid or inconsistent."""


class ComputationError(HetRegionError, RuntimeError):
    """A numerical routine could not produce a valid result."""


class EmptyRegionError(ComputationError):
    def __init__(self, message="empty region"):
        super().__init__(message)
