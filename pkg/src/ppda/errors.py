"""Exception hierarchy of the ppda package."""

from typing import Optional


class PPDAError(Exception):
    """Base class for all errors raised by the library."""


class ParseError(PPDAError):
    def __init__(self, message: str, line: Optional[int] = None, column: Optional[int] = None):
        self.line = line
        self.column = column
        self.reason = message
        if line is not None:
            message = f"{line}:{column}: {message}"
        super().__init__(message)


class ModelError(PPDAError):
    """Structural misuse: wrong alphabet, unnormalized input, bad ranges."""


class OracleUnknown(PPDAError):
    """A predicate the algorithm needs could not be decided."""

    def __init__(self, predicate: str, hint: str = "try --backend external"):
        self.predicate = predicate
        super().__init__(f"undecided predicate {predicate} ({hint})")


class SolverError(PPDAError):
    """The external solver process failed or answered garbage."""
