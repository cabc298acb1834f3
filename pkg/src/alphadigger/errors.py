"""Exception hierarchy shared across the package."""


class AlphaDiggerError(Exception):
    """Base class for all package errors."""


class DataError(AlphaDiggerError):
    """Invalid data or violated precondition (domain error)."""


class ConfigError(AlphaDiggerError):
    """Invalid configuration value or unknown key."""


class FormatError(AlphaDiggerError):
    """Malformed input file (embedding file, CSV, model file)."""


class NumericalError(AlphaDiggerError):
    """Numerical failure (e.g. kernel matrix not positive definite)."""


class ModelStateError(AlphaDiggerError):
    """Operation on a model in the wrong state (e.g. predict before fit)."""
