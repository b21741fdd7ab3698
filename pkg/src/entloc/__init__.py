"""Measurement-induced localization of two-photon polarization entanglement."""

from .errors import (
    DegenerateCouplingError,
    DegenerateOutcomeError,
    EntlocError,
    InvalidArgumentError,
    ModelInconsistencyError,
    UnidentifiableError,
)

__version__ = "0.1.0"

__all__ = [
    "DegenerateCouplingError",
    "DegenerateOutcomeError",
    "EntlocError",
    "InvalidArgumentError",
    "ModelInconsistencyError",
    "UnidentifiableError",
    "__version__",
]
