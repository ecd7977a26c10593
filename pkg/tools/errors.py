#!/usr/bin/env python3
"""
Exceptions raised by the tomography tools.

Every error a tool can raise on bad input derives from TomographyError so the
pipeline entry point can catch them in one place and emit an error record.
"""


class TomographyError(Exception):
    """Base class for all tool errors."""

    kind = "tomography-error"


class InvalidArgumentError(TomographyError, ValueError):
    kind = "invalid-argument"


class UndefinedPhaseError(TomographyError):
    kind = "undefined-phase"


class IncompletePlanError(TomographyError):
    kind = "incomplete-plan"


class DegenerateParameterError(TomographyError):
    kind = "degenerate-parameter"


class UnstableMetricError(TomographyError):
    kind = "unstable-metric"


class OutOfRangeError(TomographyError):
    kind = "out-of-range"


class CalibrationError(TomographyError):
    kind = "calibration-failure"


class UndefinedAverageError(TomographyError):
    kind = "undefined-average"


class UnresolvedWidthError(TomographyError):
    kind = "unresolved-width"


class ParseError(TomographyError):
    """Malformed measurement file. `line` is the 1-based file line."""

    kind = "parse-error"

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
