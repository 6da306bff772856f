"""Exception types shared across the package.

The CLI maps these onto exit codes: input-side failures (ParseError,
StructuralError) exit 1, ConfigError exits 2, everything else exits 3.
"""

from __future__ import annotations


class SwpsError(Exception):
    """Base class for errors raised by this package."""


class ParseError(SwpsError):
    """Malformed input data (text or binary).

    Carries enough location information to point at the offending byte
    or line.
    """

    def __init__(self, message, *, line=None, offset=None):
        loc = ""
        if line is not None:
            loc = f" (line {line})"
        elif offset is not None:
            loc = f" (byte offset {offset})"
        super().__init__(message + loc)
        self.line = line
        self.offset = offset


class StructuralError(SwpsError):
    """Input decoded cleanly but violates a structural rule.

    Examples: stroke count disagrees with the strokes actually present,
    record size field disagrees with the bytes consumed, empty stroke.
    """


class ConfigError(SwpsError):
    """One or more invalid configuration fields.

    All offending fields are collected and reported together, each with
    its dotted path.
    """

    def __init__(self, field_errors):
        self.field_errors = list(field_errors)
        lines = "; ".join(self.field_errors)
        super().__init__(f"invalid configuration: {lines}")


class DegenerateKeypoints(SwpsError):
    """Hanging normalization keypoints are too close to define an angle."""


class NonFiniteLoss(SwpsError):
    """Training produced a NaN or infinite loss."""
