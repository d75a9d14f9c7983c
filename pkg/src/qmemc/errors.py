"""Exception hierarchy.

Input problems derive from :class:`InputError` (CLI exit code 2), numerical
failures from :class:`NumericalError` (CLI exit code 3).  Every exception
carries a ``details`` dict that the CLI serializes as a diagnostic.
"""

from __future__ import annotations

from typing import Any


class QmemcError(Exception):
    """Base class for all package errors."""

    def __init__(self, message: str, **details: Any) -> None:
        super().__init__(message)
        self.message = message
        self.details = details

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"error": type(self).__name__, "message": self.message}
        for key, value in self.details.items():
            if isinstance(value, (str, int, float, bool, list, tuple, dict)) or value is None:
                out[key] = value
        return out


class InputError(QmemcError, ValueError):
    pass


class NumericalError(QmemcError, ArithmeticError):
    pass


class ValidationError(InputError):
    pass


class NegativeProbability(ValidationError):
    pass


class RowSumMismatch(ValidationError):
    pass


class NotIrreducible(ValidationError):
    pass


class DuplicateEdge(ValidationError):
    pass


class UnknownLabel(ValidationError):
    pass


class NotPredictive(InputError):
    pass


class NotNormalized(InputError):
    pass


class DimensionMismatch(InputError):
    pass


class ParameterOutOfRange(InputError):
    pass


class NotMinimal(InputError):
    pass


class EpsilonOutOfRange(InputError):
    pass


class AlphabetTooLarge(InputError):
    pass


class NoConvergence(NumericalError):
    """Iterative solver hit its cap.  ``residual`` and ``iterate`` are kept for diagnosis."""

    def __init__(self, message: str, residual: float | None = None, iterate: Any = None, **details: Any):
        super().__init__(message, residual=residual, **details)
        self.residual = residual
        self.iterate = iterate


class HorizonInconclusive(NumericalError):
    pass


class InvariantViolation(NumericalError):
    pass


class NoSuccessfulRecords(NumericalError):
    pass


class NoCompressiveImplementation(NumericalError):
    pass
