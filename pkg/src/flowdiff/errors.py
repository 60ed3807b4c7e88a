"""Exception types shared across the package."""


class FlowDiffError(Exception):
    """Base class for all flowdiff errors."""


class UsageError(FlowDiffError):
    """Bad arguments or misuse of an API contract."""


class GraphParseError(FlowDiffError):
    """Malformed edge-list input."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class FeasibilityError(FlowDiffError):
    """A potential violates the lower bounds of an instance."""

    def __init__(self, message, vertex=None, violation=None):
        super().__init__(message)
        self.vertex = vertex
        self.violation = violation


class NumericalError(FlowDiffError):
    """A numerical routine failed to converge or hit an invalid regime."""


class VerificationError(FlowDiffError):
    """An internal certificate or oracle comparison failed."""
