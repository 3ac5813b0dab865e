"""Exception hierarchy.

Errors are grouped by who is at fault: a bad configuration value, a data
file that does not match its schema, or a numeric condition that makes a
computation undefined. The command line maps these groups onto distinct
exit codes.
"""

from __future__ import annotations


class CausalSynthError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(CausalSynthError):
    """A configuration value is missing, malformed, or out of range."""


class SchemaError(CausalSynthError):
    """A schema definition is invalid or two schemas do not agree."""


class DataError(CausalSynthError):
    """Data content violates its declared schema or is otherwise unusable."""


class NumericError(CausalSynthError):
    """A computation is undefined for the given numeric inputs."""


class DegenerateFitError(NumericError):
    """Model fitting cannot proceed (single-class labels with no penalty)."""


class EstimationError(NumericError):
    """An estimator's preconditions fail (zero denominators, empty arms)."""


class PositivityError(NumericError):
    """Positivity repair cannot find the required complementary-arm rows."""
