class FedPlsError(Exception):
    """Base class for every error raised by this package."""


class ParameterError(FedPlsError, ValueError):
    """A numeric parameter lies outside its admissible range."""


class ContractViolation(FedPlsError, ValueError):
    """An operation was called with arguments that break its precondition."""


class ConfigError(FedPlsError, ValueError):
    """A run configuration is malformed or inconsistent."""


class FederationError(FedPlsError, RuntimeError):
    """A federation round could not complete."""
