"""
QSDA: Error Types
Library code raises these; run_sda.py maps them onto exit codes.
"""


class SdaError(Exception):
    """Base class for every error raised by the toolkit."""


class ProfileError(SdaError, ValueError):
    """A decision profile is malformed (bad lengths, entries outside [0, 1])."""


class ModelError(SdaError, ValueError):
    """An SPRT model or its discretization is invalid."""


class GroupSpecError(SdaError, ValueError):
    """Group size / threshold outside the admissible range or band."""


class EnumerationCapError(SdaError, RuntimeError):
    """Exact enumeration would exceed the configured number of joint outcomes."""


class NumericalError(SdaError, ArithmeticError):
    """A computation broke down numerically (singular system, lost mass)."""


class CalibrationError(SdaError, RuntimeError):
    """Threshold bisection could not reach its target."""

    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}

    def __str__(self) -> str:
        base = super().__str__()
        if not self.diagnostics:
            return base
        details = ", ".join(f"{k}={v}" for k, v in self.diagnostics.items())
        return f"{base} ({details})"
