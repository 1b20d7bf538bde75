"""Exception types shared across the package."""


class CoopstabError(Exception):
    """Base class for package errors."""


class NumericFailure(CoopstabError, RuntimeError):
    """An iterative numeric routine failed to converge or a certificate
    precondition (Schur stability, positive definiteness) is violated."""


class ScenarioError(CoopstabError, ValueError):
    """A scenario file is malformed or violates a field invariant."""
