"""Exception hierarchy shared across the package."""


class HawkcastError(Exception):
    """Base class for all package errors."""


class ParameterError(HawkcastError, ValueError):
    """An argument is outside its documented domain."""


class DataError(HawkcastError):
    """Input data violates a schema or consistency requirement."""


class EstimationError(HawkcastError):
    """A fit failed or is degenerate."""


class ScenarioError(HawkcastError):
    """A simulation scenario is inconsistent or explodes."""


class ConfigurationError(HawkcastError):
    """A model variant was configured without its required inputs."""


class InsufficientDataError(HawkcastError):
    """Too few observations for the requested statistic."""


class NumericError(HawkcastError, ArithmeticError):
    """A numerical routine failed to reach its tolerance."""
