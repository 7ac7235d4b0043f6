"""Exception hierarchy shared by every layer."""


class QfheError(Exception):
    """Base class for domain errors."""

    exit_code = 10


class ConfigurationError(QfheError):
    """Parameters or sizes that the construction cannot support."""

    exit_code = 11


class DimensionError(QfheError, ValueError):
    """Operands whose shapes do not conform."""

    exit_code = 12


class InversionFailure(QfheError):
    """No in-bound preimage exists for the given vector."""

    exit_code = 13


class NoiseBudgetError(QfheError):
    """A homomorphic gate would exceed the validated noise budget."""

    exit_code = 14
