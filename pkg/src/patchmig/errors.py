"""Exception hierarchy shared across the package.

Every error raised on purpose derives from PatchmigError so the CLI can map
failures to its exit-code contract: configuration problems exit 2, data
problems exit 3, numerical problems exit 4.
"""

from __future__ import annotations


class PatchmigError(Exception):
    """Base class for all structured errors raised by this package.

    Carries an optional ``diagnostics`` dict with context for post-mortems
    (dropped-row counts, solver state, condition numbers); the CLI includes
    it in the machine-readable error summary.
    """

    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class ConfigError(PatchmigError):
    """Invalid or inconsistent configuration (CLI exit code 2)."""


class DataError(PatchmigError):
    """Malformed, missing, or inconsistent input data (CLI exit code 3)."""


class NumericalError(PatchmigError):
    """Estimation or simulation failed numerically (CLI exit code 4)."""
