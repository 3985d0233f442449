"""Structured errors shared across the package."""

from __future__ import annotations


class LatgaussError(Exception):
    """Base class; `payload` carries machine-readable fields for reports."""

    def __init__(self, message: str, **payload):
        super().__init__(message)
        self.payload = dict(payload)

    def as_dict(self) -> dict:
        return {"error": type(self).__name__, "message": str(self), **self.payload}


class DimensionError(LatgaussError):
    """Input shape does not match a declared dimension."""


class UnsupportedDifferentiation(LatgaussError):
    """Differentiation requested through a non-smooth activation."""


class InvertibilityError(LatgaussError):
    """A lower Lipschitz constant of zero (or negative) was supplied or measured."""


class DescentViolation(LatgaussError):
    """Gradient descent objective increased; the curvature bound was underestimated."""


class PlanTooLarge(LatgaussError):
    """Planned step count exceeds the configured cap."""


class DegeneratePlan(LatgaussError):
    """Planned horizon or step count collapsed to zero."""


class InitializationError(LatgaussError):
    """Chain start point violates the closeness precondition."""


class NumericalBlowup(LatgaussError):
    """Non-finite state or gradient encountered; payload carries the state."""


class EnumerationCap(LatgaussError):
    """Exact enumeration requested above the supported dimension."""


class SupportError(LatgaussError):
    """A distribution's support is not contained where required."""


class ConfigError(LatgaussError):
    """Configuration file missing, malformed, or containing unknown keys."""


class VerificationError(LatgaussError):
    """A self-check guarding an artifact or report failed."""
