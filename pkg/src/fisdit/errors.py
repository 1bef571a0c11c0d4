class ContractViolation(Exception):
    """A caller broke a precondition that the scheduler normally guarantees."""


class ConfigError(ValueError):
    """Invalid configuration value; ``key`` names the offending field."""

    def __init__(self, key, message):
        super().__init__(f"{key}: {message}")
        self.key = key


class DivisionGuardError(ArithmeticError):
    """A relative metric was requested against a zero-norm reference."""

    def __init__(self, message, indices=()):
        super().__init__(message)
        self.indices = tuple(indices)


class DiagnosticError(AssertionError):
    """A built-in diagnostic assertion failed."""

    def __init__(self, message, indices=()):
        super().__init__(message)
        self.indices = tuple(indices)
