"""Exception hierarchy for the ccaud package.

Every error raised by the library derives from :class:`CcaudError` so callers
can catch one type.  The CLI maps the two subclasses onto distinct process
exit codes (configuration problems vs. malformed on-disk dumps).
"""

from __future__ import annotations


class CcaudError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(CcaudError, ValueError):
    """Invalid parameter, inconsistent inputs, or an infeasible configuration."""


class DumpFormatError(CcaudError, ValueError):
    """A feature/image dump on disk is missing, truncated, or inconsistent."""
