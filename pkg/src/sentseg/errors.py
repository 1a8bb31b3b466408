"""Exception hierarchy shared across the package."""


class SentsegError(Exception):
    """Base class for all errors raised by this package."""


class InvalidInputError(SentsegError, ValueError):
    """An argument violates an operation's precondition."""


class CorpusFormatError(SentsegError, ValueError):
    """A corpus file does not conform to the TSV format."""


class PackingError(SentsegError, ValueError):
    """A token stream cannot be packed under the requested policy."""


class ShapeError(SentsegError, ValueError):
    """Operands of a tensor operation have incompatible shapes."""


class GradCheckError(SentsegError, RuntimeError):
    """A finite-difference check could not be carried out."""


class ConfigError(SentsegError, ValueError):
    """A run or model configuration is inconsistent or incomplete."""


class TrainingError(SentsegError, RuntimeError):
    """Training diverged or could not proceed."""
