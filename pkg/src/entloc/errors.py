"""Exception types shared across the package."""


class EntlocError(Exception):
    """Base class for all package errors."""


class InvalidArgumentError(EntlocError, ValueError):
    """A parameter is outside its documented domain."""


class DegenerateOutcomeError(EntlocError):
    """A conditional outcome has (numerically) zero probability."""


class DegenerateCouplingError(DegenerateOutcomeError):
    """The coupling never delivers a usable signal photon."""


class ModelInconsistencyError(EntlocError):
    """A closed-form expression left its physical range."""


class UnidentifiableError(EntlocError):
    """Measurement settings do not determine the state."""
