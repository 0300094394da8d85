"""
Exception hierarchy for dqpe.

Input problems (bad configuration, malformed files, invalid arguments) derive from
InputError and map to CLI exit code 2. Failures of the numerics themselves derive
from NumericalError and map to exit code 3.
"""

from __future__ import annotations

from typing import Any


class DqpeError(Exception):
    """Base class for every error raised by dqpe."""

    exit_code = 1

    def __init__(self, message: str, **details: Any) -> None:
        super().__init__(message)
        self.message = message
        self.details = details

    def to_dict(self) -> dict[str, Any]:
        """Machine-readable form written by the CLI."""
        return {
            "error": type(self).__name__,
            "message": self.message,
            "details": {key: _jsonable(value) for key, value in self.details.items()},
        }


class InputError(DqpeError, ValueError):
    exit_code = 2


class NumericalError(DqpeError, ArithmeticError):
    exit_code = 3


class ConfigError(InputError):
    pass


class RegisterSizeError(InputError):
    pass


class NormalizationError(InputError):
    pass


class UnsupportedElementError(InputError):
    pass


class FcidumpFormatError(InputError):
    pass


class GeometryError(InputError):
    pass


class StateSpecError(InputError):
    pass


class NonHermitianError(NumericalError):
    pass


class DegenerateSpectrumError(NumericalError):
    pass


class AliasingError(NumericalError):
    pass


class EstimatorError(NumericalError):
    pass


class QuadratureError(NumericalError):
    pass


class SCFConvergenceError(NumericalError):
    pass


class NonSmoothHamiltonianError(NumericalError):
    pass


class GradientError(NumericalError):
    pass


class StateOverlapError(NumericalError):
    pass


class OptimizationError(NumericalError):
    pass


def _jsonable(value: Any) -> Any:
    if hasattr(value, "tolist"):
        return _jsonable(value.tolist())
    if isinstance(value, complex):
        return [value.real, value.imag]
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (str, int, float, bool)) or value is None:
        return value
    return str(value)
