"""Exception taxonomy shared by every module.

All library errors derive from :class:`GuidanceError` so callers can catch
one base class. The CLI maps subclasses onto its exit-code scheme.
"""

from __future__ import annotations


class GuidanceError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(GuidanceError):
    """Logit vectors combined in one operation have different lengths."""


class InvalidInputError(GuidanceError):
    """An input value violates a precondition (NaN, +inf, bad scale, ...)."""


class BoundsError(GuidanceError):
    """An index or count is outside the valid range (e.g. k > vocabulary)."""


class RangeError(GuidanceError):
    """A scalar is outside its documented interval (e.g. distance not in [0,1])."""


class DegenerateResultError(GuidanceError):
    """An operation produced a result with no usable entries (all masked)."""


class ConfigError(GuidanceError):
    """A configuration value or combination of options is invalid."""


class EmptyInputError(GuidanceError):
    """An input source contained no usable records."""


class NotApplicableError(GuidanceError):
    """The requested operation does not apply to this input (caller may fall back)."""


class TransportError(GuidanceError):
    """A network call failed: timeout, connection error, or non-2xx status."""


class ProtocolError(GuidanceError):
    """A backend answered, but the payload violates the expected protocol.

    The offending payload is attached so operators can inspect it.
    """

    def __init__(self, message: str, payload: object = None):
        super().__init__(message)
        self.payload = payload


class DecodeAborted(GuidanceError):
    """Model evaluation failed mid-decode. Carries the partial result."""

    def __init__(self, message: str, partial=None):
        super().__init__(message)
        self.partial = partial
