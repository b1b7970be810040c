"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class ConfigError(ValueError):
    """Invalid configuration (bad kernel size, inconsistent dimensions...)."""


class DegenerateInputError(ArithmeticError):
    """Input carries no usable signal, e.g. a flow field with no valid pixels."""


class SamplingError(RuntimeError):
    """The dataset sampler could not produce an acceptable record."""
