"""Exception types shared across the workbench.

Configuration/validation problems map to CLI exit code 2, numeric
failures (divergence, non-finite gradients) to exit code 3.
"""


class ConfigurationError(ValueError):
    """Invalid configuration: bad axis/crop geometry, malformed config files."""


class ValidationError(ValueError):
    """Inputs violate an operation's preconditions (shapes, signs, norms)."""


class NumericError(RuntimeError):
    """A numeric failure surfaced during optimization or gradient evaluation."""
