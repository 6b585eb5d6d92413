"""Exception types shared across the toolkit."""


class ShapeError(ValueError):
    """Array lengths, sample rates, or counts do not line up."""


class ConfigurationError(ValueError):
    """A parameter combination is invalid (bad segment plan, empty prior, ...)."""


class DomainError(ValueError):
    """An argument is outside the mathematical domain of the operation."""


class ParseError(ValueError):
    """A file could not be decoded."""


class UnsupportedFormatError(ParseError):
    """The file decoded fine but uses a feature we do not handle."""


class NumericalDivergenceError(RuntimeError):
    """An integrator produced NaN/Inf mid-run."""

    def __init__(self, message: str, step: int | None = None):
        super().__init__(message)
        self.step = step
