"""Exception hierarchy shared across the package.

Every error raised by hedgecast derives from :class:`HedgecastError`, so callers
can catch one type at the CLI boundary. Subclasses carry enough location
information (step index, row/column, expert identity) to make failures
diagnosable without a debugger.
"""

from __future__ import annotations


class HedgecastError(Exception):
    """Base class for all errors raised by this package."""


class ConfigurationError(HedgecastError):
    """Invalid configuration value, dimension mismatch, or degenerate setup."""


class IngestionError(HedgecastError):
    """Bad input data. Carries the offending row (and column, when known)."""

    def __init__(self, message: str, *, row: int | None = None, column: str | None = None):
        loc = []
        if row is not None:
            loc.append(f"row {row}")
        if column is not None:
            loc.append(f"column {column!r}")
        if loc:
            message = f"{message} ({', '.join(loc)})"
        super().__init__(message)
        self.row = row
        self.column = column


class NumericalFailureError(HedgecastError):
    """Non-finite intermediate or singular system during a numerical update.

    ``step_index`` is the 0-based step at which the failure occurred; ``expert``
    identifies the failing expert when the failure happened inside a pool
    update. ``records`` may carry the partial run records accumulated before an
    aborted stream run.
    """

    def __init__(self, message: str, *, step_index: int | None = None,
                 expert: str | None = None):
        loc = []
        if step_index is not None:
            loc.append(f"step {step_index}")
        if expert is not None:
            loc.append(f"expert {expert}")
        if loc:
            message = f"{message} ({', '.join(loc)})"
        super().__init__(message)
        self.step_index = step_index
        self.expert = expert
        self.records = None


class ReportingError(HedgecastError):
    """Evaluation could not be produced (e.g. a regime slice is empty)."""


class DiagnosticError(HedgecastError):
    """A diagnostic is undefined on the given data (e.g. zero-variance column)."""


class OutOfRangeError(HedgecastError):
    """A query value lies outside the configured range."""
