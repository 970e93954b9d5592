"""Exception taxonomy shared across the package.

User-input problems (bad files, bad configuration) and numerical failures
are kept distinct so the command line client can map them to different
exit codes.
"""


class ParseError(ValueError):
    """A score file could not be parsed; carries the offending line number."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ConfigError(ValueError):
    """A request is inconsistent with the data it is applied to."""


class NumericError(RuntimeError):
    """A numerical routine failed to produce a trustworthy result."""


class InfeasibleMomentsError(NumericError):
    """Moment pair violates the Jensen gap required by a maximum-likelihood fit."""
