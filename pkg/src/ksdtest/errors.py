"""Exception hierarchy shared across the package."""


class KSDTestError(Exception):
    """Base class for all errors raised by ksdtest."""


class InputError(KSDTestError, ValueError):
    """Malformed input: wrong shape, dimension mismatch, unparsable file."""


class DomainError(KSDTestError, ArithmeticError):
    """A density or derivative was evaluated outside its support."""


class ConfigError(KSDTestError, ValueError):
    """A configuration value lies outside its admissible range."""


class DegenerateSampleError(InputError):
    """The sample carries no spread (e.g. all points identical)."""
